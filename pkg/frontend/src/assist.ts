/**
 * Seller-facing writing assistant: enter a product, read the generated
 * candidates, edit the draft, submit the approved text.
 *
 * The session holds no business state of its own; everything displayed
 * comes from the last API response, so re-running the same calls
 * reproduces the same view.
 */

import {
  ApiClient,
  Artifact,
  Candidate,
  GenerateRequest,
  InlineAttr,
  describeError,
} from "./api.js";

export type AssistStatus =
  | "idle"
  | "generating"
  | "ready"
  | "submitting"
  | "submitted";

export interface AssistForm {
  sku: string;
  title: string;
  category: string;
  attrs: InlineAttr[];
}

export interface AssistOptions {
  beamSize?: number;
  maxLen?: number;
}

function slugify(text: string): string {
  return text
    .toLowerCase()
    .replace(/[^a-z0-9]+/g, "-")
    .replace(/^-+|-+$/g, "");
}

export class AssistSession {
  form: AssistForm = { sku: "", title: "", category: "", attrs: [] };
  status: AssistStatus = "idle";
  error: string | null = null;
  artifact: Artifact | null = null;
  /** Index of the candidate the draft was initialized from. */
  selected = 0;
  draft = "";
  latencyMs: number | null = null;
  acceptanceRateToday: number | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly options: AssistOptions = {},
  ) {}

  get formValid(): boolean {
    return this.form.sku.trim() !== "" || this.form.title.trim() !== "";
  }

  get busy(): boolean {
    return this.status === "generating" || this.status === "submitting";
  }

  get candidates(): Candidate[] {
    return this.artifact ? this.artifact.candidates : [];
  }

  get provenanceBadge(): string {
    return this.artifact ? this.artifact.provenance : "";
  }

  get edited(): boolean {
    return this.artifact !== null && this.draft !== this.artifact.description;
  }

  /** Submission stays disabled while a call is in flight, and for
   * artifacts that are not awaiting review (filter-rejected or cached). */
  get canSubmit(): boolean {
    return (
      this.status === "ready" &&
      this.artifact !== null &&
      this.artifact.verdict.accepted &&
      this.artifact.screening_state === "pending"
    );
  }

  /** The generate request the current form describes: a catalog lookup
   * when only a sku is given, an inline record once a title is typed. */
  buildRequest(): GenerateRequest {
    const req: GenerateRequest = {};
    const sku = this.form.sku.trim();
    const title = this.form.title.trim();
    if (title !== "") {
      req.record = {
        sku: sku !== "" ? sku : `adhoc-${slugify(title)}`,
        title,
        category: this.form.category.trim(),
        attrs: this.form.attrs.filter((a) => a.k.trim() !== ""),
      };
    } else {
      req.sku = sku;
    }
    if (this.options.beamSize !== undefined) req.beam_size = this.options.beamSize;
    if (this.options.maxLen !== undefined) req.max_len = this.options.maxLen;
    return req;
  }

  async generate(): Promise<void> {
    if (this.busy) {
      throw new Error("a call is already in flight");
    }
    if (!this.formValid) {
      this.error = "enter a sku or a product title";
      return;
    }
    const previous: AssistStatus = this.artifact ? "ready" : "idle";
    this.status = "generating";
    this.error = null;
    try {
      const art = await this.api.generate(this.buildRequest());
      this.artifact = art;
      this.latencyMs = art.latency_ms;
      this.selected = 0;
      this.draft =
        art.provenance === "cache"
          ? art.text
          : (art.candidates[0]?.text ?? art.text);
      this.status = "ready";
    } catch (err) {
      // the form keeps its values; only the error line changes
      this.error = describeError(err);
      this.status = previous;
    }
  }

  /** Re-initialize the draft from another returned candidate. */
  selectCandidate(index: number): void {
    const candidate = this.candidates[index];
    if (candidate === undefined) {
      throw new Error(`no candidate at index ${index}`);
    }
    this.selected = index;
    this.draft = candidate.text;
  }

  editDraft(text: string): void {
    this.draft = text;
  }

  /** Approve the artifact, carrying the draft as edited text when it
   * differs from what the model wrote. */
  async submit(): Promise<void> {
    if (!this.canSubmit || this.artifact === null) {
      throw new Error("nothing submittable: generate a pending draft first");
    }
    const artifactId = this.artifact.artifact_id;
    const editedText = this.edited ? this.draft : undefined;
    this.status = "submitting";
    this.error = null;
    try {
      const res = await this.api.postVerdict(artifactId, "approve", editedText);
      this.artifact = res;
      this.acceptanceRateToday = res.acceptance_rate_today;
      this.status = "submitted";
    } catch (err) {
      this.error = describeError(err);
      this.status = "ready";
    }
  }
}
