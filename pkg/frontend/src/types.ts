// DTOs mirroring the catalog service's JSON bodies.

export interface BBox {
  x: number;
  y: number;
  width: number;
  height: number;
}

export type VerificationState = "unverified" | "verified" | "rejected";

export interface LocalizationDto {
  uuid: string;
  image: string;
  concept: string;
  alt_concept: string | null;
  bbox: BBox;
  group_of: boolean | null;
  occluded: boolean | null;
  truncated: boolean | null;
  observer: string | null;
  verification: VerificationState;
  verifier: string | null;
}

export interface ImageDto {
  uuid: string;
  collection: string;
  image_url: string;
  width_px: number | null;
  height_px: number | null;
  latitude: number | null;
  longitude: number | null;
  depth_m: number | null;
  altitude_m: number | null;
  timestamp: string | null;
  imaging_type: string | null;
  observer: string | null;
  localizations: LocalizationDto[];
}

export interface ImagePage {
  items: ImageDto[];
  total: number;
  page: number;
  page_size: number;
}

export interface ConceptDto {
  name: string;
  rank: string;
  parent: string | null;
  aliases: string[];
  children: string[];
}

export interface HealthDto {
  status: string;
  store: { collections: number; images: number; localizations: number };
  taxonomy: { nodes: number; root: string };
}

export interface UploadResult {
  collection: string;
  images: number;
  localizations: number;
  warnings: string[];
}

export interface FieldError {
  field: string;
  message: string;
}

export interface SearchFilters {
  concept?: string;
  descendants?: boolean;
  minlat?: number;
  maxlat?: number;
  minlon?: number;
  maxlon?: number;
  mindepth?: number;
  maxdepth?: number;
  imaging_type?: string;
  state?: VerificationState;
  page?: number;
  page_size?: number;
}

/** Identity of the community-contribution collection this client writes
 * new localizations into; the required Darwin Core collection fields. */
export interface ContributorConfig {
  collectionUuid: string;
  institution: string;
  email: string;
  url: string;
}

export interface AppConfig {
  apiBase: string;
  token?: string;
  contributor: ContributorConfig;
}
