// Client-side view state. The UI holds no authoritative data: everything
// here is either a mirror of the last fetch or unsaved drafts, and any
// successful mutation is followed by a refetch from the service.

import type {
  BBox,
  ImageDto,
  LocalizationDto,
  SearchFilters,
} from "./types.js";

export interface DraftBox extends BBox {
  concept: string;
}

/** Draft boxes must satisfy the catalog's bounding-box invariants before
 * submission is enabled; zero-size drags are rejected client-side. */
export function draftBoxValid(
  box: BBox,
  imageW?: number | null,
  imageH?: number | null,
): boolean {
  if (!(box.width > 0) || !(box.height > 0)) return false;
  if (box.x < 0 || box.y < 0) return false;
  if (imageW != null && imageH != null) {
    if (box.x + box.width > imageW || box.y + box.height > imageH) return false;
  }
  return true;
}

export function draftSubmittable(
  draft: DraftBox,
  imageW?: number | null,
  imageH?: number | null,
): boolean {
  return draftBoxValid(draft, imageW, imageH) && draft.concept.trim() !== "";
}

/** One displayed image. Several catalog records may share an image URL
 * (community contributions land in their own collection); the viewer shows
 * the union of their localizations. */
export interface MergedImage {
  imageUrl: string;
  widthPx: number | null;
  heightPx: number | null;
  records: ImageDto[];
  localizations: LocalizationDto[];
}

export function mergeByUrl(items: ImageDto[]): MergedImage[] {
  const byUrl = new Map<string, MergedImage>();
  for (const item of items) {
    let merged = byUrl.get(item.image_url);
    if (!merged) {
      merged = {
        imageUrl: item.image_url,
        widthPx: item.width_px,
        heightPx: item.height_px,
        records: [],
        localizations: [],
      };
      byUrl.set(item.image_url, merged);
    }
    merged.records.push(item);
    merged.localizations.push(...item.localizations);
    if (merged.widthPx == null) merged.widthPx = item.width_px;
    if (merged.heightPx == null) merged.heightPx = item.height_px;
  }
  return [...byUrl.values()];
}

export interface QueueItem {
  localization: LocalizationDto;
  imageUrl: string;
}

/** Verification review queue: one unverified localization at a time. */
export class ReviewQueue {
  private items: QueueItem[];
  private cursor = 0;
  reviewed = 0;
  skipped: QueueItem[] = [];

  constructor(items: QueueItem[]) {
    this.items = [...items];
  }

  get remaining(): number {
    return this.items.length - this.cursor;
  }

  get done(): boolean {
    return this.cursor >= this.items.length;
  }

  current(): QueueItem | null {
    return this.done ? null : this.items[this.cursor]!;
  }

  /** Advance after a successful verify/reject. */
  advance(): void {
    if (!this.done) {
      this.reviewed += 1;
      this.cursor += 1;
    }
  }

  /** Advance past an item someone else already reviewed (conflict). */
  skip(): void {
    const item = this.current();
    if (item) {
      this.skipped.push(item);
      this.cursor += 1;
    }
  }
}

export function queueFromImages(items: ImageDto[]): ReviewQueue {
  const queue: QueueItem[] = [];
  for (const image of items) {
    for (const loc of image.localizations) {
      if (loc.verification === "unverified") {
        queue.push({ localization: loc, imageUrl: image.image_url });
      }
    }
  }
  return new ReviewQueue(queue);
}

export interface ViewState {
  filters: SearchFilters;
  results: MergedImage[];
  total: number;
  selected: MergedImage | null;
  drafts: DraftBox[];
}

export function initialViewState(): ViewState {
  return {
    filters: { page: 1, page_size: 24 },
    results: [],
    total: 0,
    selected: null,
    drafts: [],
  };
}
