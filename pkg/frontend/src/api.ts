// Typed client for the catalog REST API. The UI talks to the service only
// through this module; every error surfaces as an ApiError with the
// service's machine-readable field errors attached.

import type {
  ConceptDto,
  FieldError,
  HealthDto,
  ImagePage,
  SearchFilters,
  UploadResult,
  VerificationState,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly errors: FieldError[];

  constructor(status: number, errors: FieldError[], message?: string) {
    super(message ?? errors.map((e) => `${e.field}: ${e.message}`).join("; ")
      ?? `HTTP ${status}`);
    this.status = status;
    this.errors = errors;
  }
}

async function toApiError(resp: Response): Promise<ApiError> {
  let errors: FieldError[] = [];
  try {
    const body = await resp.json();
    if (Array.isArray(body?.errors)) errors = body.errors;
  } catch {
    // non-JSON error body: keep the status alone
  }
  if (errors.length === 0) {
    errors = [{ field: "request", message: `HTTP ${resp.status}` }];
  }
  return new ApiError(resp.status, errors);
}

function query(filters: SearchFilters): string {
  const params = new URLSearchParams();
  const set = (key: string, value: unknown) => {
    if (value !== undefined && value !== null && value !== "") {
      params.set(key, String(value));
    }
  };
  set("concept", filters.concept);
  if (filters.descendants) params.set("descendants", "true");
  set("minlat", filters.minlat);
  set("maxlat", filters.maxlat);
  set("minlon", filters.minlon);
  set("maxlon", filters.maxlon);
  set("mindepth", filters.mindepth);
  set("maxdepth", filters.maxdepth);
  set("imaging_type", filters.imaging_type);
  set("state", filters.state);
  set("page", filters.page);
  set("page_size", filters.page_size);
  const text = params.toString();
  return text ? `?${text}` : "";
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly token?: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private authHeaders(): Record<string, string> {
    return this.token ? { Authorization: `Bearer ${this.token}` } : {};
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.base}${path}`);
    if (!resp.ok) throw await toApiError(resp);
    return (await resp.json()) as T;
  }

  health(): Promise<HealthDto> {
    return this.getJson("/health");
  }

  concept(name: string): Promise<ConceptDto> {
    return this.getJson(`/concepts/${encodeURIComponent(name)}`);
  }

  async descendants(name: string): Promise<string[]> {
    const body = await this.getJson<{ descendants: string[] }>(
      `/concepts/${encodeURIComponent(name)}/descendants`,
    );
    return body.descendants;
  }

  images(filters: SearchFilters): Promise<ImagePage> {
    return this.getJson(`/images${query(filters)}`);
  }

  async exportCsv(filters: SearchFilters): Promise<string> {
    const resp = await this.fetchImpl(`${this.base}/export${query(filters)}`);
    if (!resp.ok) throw await toApiError(resp);
    return resp.text();
  }

  async postCollection(csv: string, meta: string): Promise<UploadResult> {
    const form = new FormData();
    form.append("csv", new Blob([csv], { type: "text/csv" }), "upload.csv");
    form.append("meta", new Blob([meta], { type: "text/plain" }), "upload.meta");
    const resp = await this.fetchImpl(`${this.base}/collections`, {
      method: "POST",
      body: form,
      headers: this.authHeaders(),
    });
    if (!resp.ok) throw await toApiError(resp);
    return (await resp.json()) as UploadResult;
  }

  async patchLocalization(
    id: string,
    state: Exclude<VerificationState, "unverified">,
    verifier: string,
  ): Promise<unknown> {
    const resp = await this.fetchImpl(
      `${this.base}/localizations/${encodeURIComponent(id)}`,
      {
        method: "PATCH",
        headers: { "Content-Type": "application/json", ...this.authHeaders() },
        body: JSON.stringify({ state, verifier }),
      },
    );
    if (!resp.ok) throw await toApiError(resp);
    return resp.json();
  }
}
