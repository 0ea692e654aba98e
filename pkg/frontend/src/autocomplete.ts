// Concept-name autocomplete over the full tree, fetched once (the root's
// descendant closure is the whole vocabulary).

import type { ApiClient } from "./api.js";

export class ConceptIndex {
  private names: string[] = [];

  static async load(client: ApiClient): Promise<ConceptIndex> {
    const index = new ConceptIndex();
    const health = await client.health();
    index.names = await client.descendants(health.taxonomy.root);
    return index;
  }

  setNames(names: string[]): void {
    this.names = [...names].sort((a, b) => a.localeCompare(b));
  }

  /** Prefix matches first, then substring matches, capped. */
  suggest(text: string, limit = 8): string[] {
    const needle = text.trim().toLowerCase();
    if (!needle) return [];
    const prefix: string[] = [];
    const inner: string[] = [];
    for (const name of this.names) {
      const hay = name.toLowerCase();
      if (hay.startsWith(needle)) prefix.push(name);
      else if (hay.includes(needle)) inner.push(name);
    }
    return [...prefix, ...inner].slice(0, limit);
  }

  has(name: string): boolean {
    const needle = name.trim().toLowerCase();
    return this.names.some((n) => n.toLowerCase() === needle);
  }
}
