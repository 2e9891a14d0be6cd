/** Bootstrap: query picker plus Label / Compare tabs. */

import { ApiClient } from "./api";
import { CompareView } from "./compare";
import { LabelingView } from "./labeling";
import type { QuerySummary } from "./types";

type Tab = "label" | "compare";

async function boot(): Promise<void> {
  const api = new ApiClient("");
  const header = document.getElementById("controls")!;
  const content = document.getElementById("content")!;

  const queries = await api.queries();
  if (queries.length === 0) {
    content.textContent = "Store has no queries yet. Ingest or crawl first.";
    return;
  }

  let active: QuerySummary = queries[0]!;
  let tab: Tab = "label";
  let labeling: LabelingView | null = null;

  const select = document.createElement("select");
  for (const query of queries) {
    const option = document.createElement("option");
    option.value = query.id;
    option.textContent = `${query.text} (${query.record_count} images, ${query.labeled_count} labeled)`;
    select.appendChild(option);
  }
  select.onchange = () => {
    active = queries.find((q) => q.id === select.value) ?? active;
    void show();
  };

  const labelButton = document.createElement("button");
  labelButton.textContent = "Label";
  labelButton.onclick = () => {
    tab = "label";
    void show();
  };
  const compareButton = document.createElement("button");
  compareButton.textContent = "Compare";
  compareButton.onclick = () => {
    tab = "compare";
    void show();
  };
  header.append(select, labelButton, compareButton);

  async function show(): Promise<void> {
    labeling?.unmount();
    labeling = null;
    content.textContent = "loading...";
    if (tab === "label") {
      labeling = new LabelingView(content, api, active.id, active.record_count);
      await labeling.mount();
    } else {
      await new CompareView(content, api, active.id).mount();
    }
  }

  await show();
}

void boot();
