/**
 * Side-by-side comparison: text-search order on the left, reranked order
 * on the right with a rank-delta chip per image. Until a reranked list
 * exists the right column shows a call-to-action that triggers
 * POST /api/queries/{qid}/rerank.
 */

import { ApiClient, ApiError } from "./api";
import type { UiImage } from "./types";

export function formatDelta(originalRank: number, newRank: number): string {
  const delta = originalRank - newRank; // positive = the image rose
  if (delta > 0) return `+${delta}`;
  return `${delta}`;
}

export class CompareView {
  leftImages: UiImage[] = [];
  rightImages: UiImage[] | null = null;
  evalMessage = "";
  busy = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly queryId: string,
  ) {}

  async mount(): Promise<void> {
    await this.load();
  }

  async load(): Promise<void> {
    this.leftImages = await this.api.allImages(this.queryId, "text");
    try {
      this.rightImages = await this.api.allImages(this.queryId, "reranked");
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.rightImages = null; // not reranked yet -> call to action
      } else {
        throw error;
      }
    }
    await this.loadEvalSummary();
    this.render();
  }

  private async loadEvalSummary(): Promise<void> {
    try {
      const metrics = await this.api.evalQuery(this.queryId);
      const ap = metrics.metrics["average_precision"];
      this.evalMessage = ap ? `average precision ${ap.mean.toFixed(3)}` : "";
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.evalMessage = "label more images to evaluate this ranking";
      } else {
        this.evalMessage = "";
      }
    }
  }

  async rerankNow(): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    this.render();
    try {
      await this.api.rerank(this.queryId);
      await this.load();
    } finally {
      this.busy = false;
      this.render();
    }
  }

  render(): void {
    this.root.textContent = "";

    const status = document.createElement("p");
    status.dataset.testid = "eval-summary";
    status.textContent = this.evalMessage;
    this.root.appendChild(status);

    const columns = document.createElement("div");
    columns.className = "columns";

    columns.appendChild(this.renderColumn(
      "Text-search order", this.leftImages, "left", (image) => `#${image.original_rank}`));

    if (this.rightImages === null) {
      const cta = document.createElement("section");
      cta.className = "column";
      const heading = document.createElement("h2");
      heading.textContent = "Reranked order";
      const button = document.createElement("button");
      button.dataset.testid = "rerank-now";
      button.textContent = this.busy ? "reranking..." : "Rerank now";
      button.disabled = this.busy;
      button.onclick = () => void this.rerankNow();
      const note = document.createElement("p");
      note.textContent = "No reranked list yet for this query.";
      cta.append(heading, note, button);
      columns.appendChild(cta);
    } else {
      columns.appendChild(this.renderColumn(
        "Reranked order", this.rightImages, "right",
        (image) => {
          const newRank = image.new_rank ?? image.original_rank;
          return `#${newRank}`;
        }));
    }
    this.root.appendChild(columns);
  }

  private renderColumn(
    title: string,
    images: UiImage[],
    side: "left" | "right",
    rankText: (image: UiImage) => string,
  ): HTMLElement {
    const section = document.createElement("section");
    section.className = "column";
    section.dataset.testid = `column-${side}`;
    const heading = document.createElement("h2");
    heading.textContent = title;
    section.appendChild(heading);

    const grid = document.createElement("div");
    grid.className = "grid";
    for (const image of images) {
      const card = document.createElement("figure");
      card.className = "card";
      card.dataset.imageId = image.image_id;

      const img = document.createElement("img");
      img.src = this.api.imageUrl(image.image_id);
      img.alt = rankText(image);
      card.appendChild(img);

      const caption = document.createElement("figcaption");
      caption.textContent = rankText(image) + " ";
      if (side === "right" && image.new_rank !== undefined) {
        const chip = document.createElement("span");
        chip.className = "badge delta";
        chip.dataset.testid = "delta-chip";
        chip.textContent = formatDelta(image.original_rank, image.new_rank);
        caption.appendChild(chip);
      }
      if (image.label) {
        const badge = document.createElement("span");
        badge.className = `badge label-${image.label}`;
        badge.textContent = image.label;
        caption.appendChild(badge);
      }
      card.appendChild(caption);
      grid.appendChild(card);
    }
    section.appendChild(grid);
    return section;
  }
}
