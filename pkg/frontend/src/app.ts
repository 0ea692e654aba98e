// Bootstrap and hash routing: #/search, #/annotate, #/verify. The annotate
// route always reloads its image from the current search results, so the
// display never outlives server truth.

import { ApiClient } from "./api.js";
import { AnnotateView } from "./annotate.js";
import { ConceptIndex } from "./autocomplete.js";
import { clear, el, errorBanner } from "./dom.js";
import { SearchView } from "./search.js";
import type { AppConfig } from "./types.js";
import { VerifyView } from "./verify.js";

export function defaultConfig(): AppConfig {
  return {
    apiBase: "",
    contributor: {
      collectionUuid: "webui-contributions",
      institution: "Web client contributor",
      email: "contributor@example.org",
      url: window.location.origin || "http://localhost",
    },
  };
}

export class App {
  readonly client: ApiClient;
  readonly search: SearchView;
  readonly annotate: AnnotateView;
  readonly verify: VerifyView;

  constructor(
    readonly rootNode: HTMLElement,
    readonly concepts: ConceptIndex,
    config: AppConfig,
    client?: ApiClient,
  ) {
    this.client = client ?? new ApiClient(config.apiBase, config.token);
    this.search = new SearchView(this.client, concepts);
    this.annotate = new AnnotateView(this.client, concepts, config);
    this.verify = new VerifyView(this.client);

    this.search.onOpen = (image) => {
      this.annotate.open(image);
      this.show("annotate");
    };
    this.annotate.onRefresh = async () => {
      // server truth: rerun the active query and reselect the same URL
      const url = this.annotate.image?.imageUrl;
      await this.search.search(this.search.filters.page ?? 1);
      const fresh = this.search.results.find((m) => m.imageUrl === url);
      if (fresh) this.annotate.open(fresh);
    };
  }

  show(route: "search" | "annotate" | "verify"): void {
    clear(this.rootNode);
    const nav = el(
      "nav",
      {},
      ...(["search", "annotate", "verify"] as const).map((name) => {
        const link = el("a", { href: `#/${name}` }, name);
        link.addEventListener("click", () => this.show(name));
        return link;
      }),
    );
    this.rootNode.append(nav);
    if (route === "search") this.rootNode.append(this.search.root);
    if (route === "annotate") this.rootNode.append(this.annotate.root);
    if (route === "verify") {
      this.rootNode.append(this.verify.root);
      void this.verify.load();
    }
  }
}

export async function boot(rootNode: HTMLElement,
                           config = defaultConfig()): Promise<App> {
  const client = new ApiClient(config.apiBase, config.token);
  try {
    const concepts = await ConceptIndex.load(client);
    const app = new App(rootNode, concepts, config, client);
    const route = window.location.hash.replace("#/", "") || "search";
    app.show(route === "annotate" || route === "verify" ? route : "search");
    await app.search.search();
    return app;
  } catch (error) {
    clear(rootNode);
    rootNode.append(errorBanner(`cannot reach the catalog service: ${error}`));
    throw error;
  }
}
