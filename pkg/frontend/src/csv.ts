// Build the ingest-format CSV and sidecar meta for submitting drawn boxes.
// New localizations travel as a tiny upload into the client's
// community-contribution collection; the service's quality-control workflow
// (verification) takes it from there.

import type { DraftBox } from "./state.js";
import type { ContributorConfig } from "./types.js";

export const CSV_COLUMNS = [
  "image_url", "x", "y", "width", "height", "concept", "altconcept",
  "latitude", "longitude", "depth_m", "timestamp", "imaging_type",
  "observer", "altitude_m", "group_of", "occluded", "truncated",
] as const;

function cell(value: string): string {
  if (/[",\n]/.test(value)) {
    return `"${value.replaceAll('"', '""')}"`;
  }
  return value;
}

export function buildSubmissionCsv(imageUrl: string, drafts: DraftBox[]): string {
  const lines = [CSV_COLUMNS.join(",")];
  for (const draft of drafts) {
    const row: Record<string, string> = {
      image_url: imageUrl,
      x: String(draft.x),
      y: String(draft.y),
      width: String(draft.width),
      height: String(draft.height),
      concept: draft.concept,
    };
    lines.push(CSV_COLUMNS.map((c) => cell(row[c] ?? "")).join(","));
  }
  return lines.join("\n") + "\n";
}

export function buildContributionMeta(config: ContributorConfig): string {
  return [
    `uuid=${config.collectionUuid}`,
    `owner_institution=${config.institution}`,
    `rights_holder=${config.institution}`,
    `contributor_email=${config.email}`,
    "record_type=images",
    `modified=${new Date().toISOString().slice(0, 19)}+00:00`,
    `url=${config.url}`,
    "data_format=CSV",
    "basis_of_record=human",
    "dataset_name=web client contributions",
  ].join("\n") + "\n";
}
