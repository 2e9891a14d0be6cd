/**
 * Labeling grid: candidates in text-rank order, keyboard r/i/d labels the
 * focused card and advances focus. A label badge renders only after the
 * server acknowledged the write; a failed write marks the card unsynced
 * with a retry button. One keypress issues exactly one POST.
 */

import { ApiClient } from "./api";
import type { LabelValue, UiImage } from "./types";

const KEY_TO_LABEL: Record<string, LabelValue> = {
  r: "relevant",
  i: "irrelevant",
  d: "difficult",
};

interface CardState {
  image: UiImage;
  /** last server-acknowledged label; the only thing the badge shows */
  ackedLabel: LabelValue | null;
  pending: boolean;
  unsynced: LabelValue | null;
}

export class LabelingView {
  readonly pageSize: number;
  page = 0;
  focusIndex = 0;
  cards: CardState[] = [];
  totalImages = 0;

  private inflight: Promise<void>[] = [];
  private keyListener = (event: KeyboardEvent) => this.handleKey(event.key);

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly queryId: string,
    totalImages: number,
    pageSize = 100,
  ) {
    this.totalImages = totalImages;
    this.pageSize = pageSize;
  }

  get pageCount(): number {
    return Math.max(1, Math.ceil(this.totalImages / this.pageSize));
  }

  async mount(): Promise<void> {
    document.addEventListener("keydown", this.keyListener);
    await this.loadPage(0);
  }

  unmount(): void {
    document.removeEventListener("keydown", this.keyListener);
  }

  async loadPage(page: number): Promise<void> {
    this.page = page;
    const images = await this.api.images(
      this.queryId, "text", page * this.pageSize, this.pageSize);
    this.cards = images.map((image) => ({
      image,
      ackedLabel: image.label ?? null,
      pending: false,
      unsynced: null,
    }));
    this.focusIndex = 0;
    this.render();
  }

  handleKey(key: string): void {
    const label = KEY_TO_LABEL[key.toLowerCase()];
    if (label) {
      this.labelFocused(label);
      return;
    }
    if (key === "ArrowRight" || key === "j") this.moveFocus(1);
    if (key === "ArrowLeft" || key === "k") this.moveFocus(-1);
  }

  moveFocus(delta: number): void {
    const next = this.focusIndex + delta;
    if (next >= 0 && next < this.cards.length) {
      this.focusIndex = next;
      this.render();
    }
  }

  /** Label the focused card and advance focus; no-op while that card's write is in flight. */
  labelFocused(label: LabelValue): void {
    const card = this.cards[this.focusIndex];
    if (!card || card.pending) return;
    card.pending = true;
    card.unsynced = null;
    this.moveFocus(1);
    this.inflight.push(this.submit(card, label));
    this.render();
  }

  retry(card: CardState): void {
    if (card.pending || card.unsynced === null) return;
    const label = card.unsynced;
    card.pending = true;
    card.unsynced = null;
    this.inflight.push(this.submit(card, label));
    this.render();
  }

  private async submit(card: CardState, label: LabelValue): Promise<void> {
    try {
      await this.api.postLabel(card.image.image_id, this.queryId, label);
      card.ackedLabel = label; // the 204 acknowledges exactly this value
    } catch {
      card.unsynced = label;
    } finally {
      card.pending = false;
      this.render();
    }
  }

  /** Resolve once every in-flight write settled (used by tests and page nav). */
  async settle(): Promise<void> {
    while (this.inflight.length) {
      const batch = this.inflight;
      this.inflight = [];
      await Promise.allSettled(batch);
    }
  }

  get labeledCount(): number {
    return this.cards.filter((c) => c.ackedLabel !== null).length;
  }

  render(): void {
    this.root.textContent = "";

    const header = document.createElement("div");
    header.className = "toolbar";
    const progress = document.createElement("span");
    progress.dataset.testid = "progress";
    progress.textContent = `labeled ${this.labeledCount}/${this.cards.length}`;
    header.appendChild(progress);

    const pager = document.createElement("span");
    pager.dataset.testid = "pager";
    pager.textContent = ` page ${this.page + 1}/${this.pageCount} `;
    header.appendChild(pager);
    if (this.pageCount > 1) {
      const prev = document.createElement("button");
      prev.textContent = "prev";
      prev.disabled = this.page === 0;
      prev.onclick = () => void this.loadPage(this.page - 1);
      const next = document.createElement("button");
      next.textContent = "next";
      next.disabled = this.page >= this.pageCount - 1;
      next.onclick = () => void this.loadPage(this.page + 1);
      header.append(prev, next);
    }
    const hint = document.createElement("span");
    hint.className = "hint";
    hint.textContent = "keys: r relevant / i irrelevant / d difficult";
    header.appendChild(hint);
    this.root.appendChild(header);

    const grid = document.createElement("div");
    grid.className = "grid";
    grid.dataset.testid = "grid";
    this.cards.forEach((card, index) => grid.appendChild(this.renderCard(card, index)));
    this.root.appendChild(grid);
  }

  private renderCard(card: CardState, index: number): HTMLElement {
    const element = document.createElement("figure");
    element.className = "card";
    element.dataset.imageId = card.image.image_id;
    if (index === this.focusIndex) element.classList.add("focused");
    if (card.pending) element.classList.add("pending");
    element.onclick = () => {
      this.focusIndex = index;
      this.render();
    };

    const img = document.createElement("img");
    img.src = this.api.imageUrl(card.image.image_id);
    img.alt = `candidate rank ${card.image.original_rank}`;
    element.appendChild(img);

    const caption = document.createElement("figcaption");
    caption.textContent = `#${card.image.original_rank} `;
    if (card.image.symbolic) {
      const badge = document.createElement("span");
      badge.className = "badge symbolic";
      badge.textContent = "symbolic";
      caption.appendChild(badge);
    }
    if (card.ackedLabel !== null) {
      const badge = document.createElement("span");
      badge.className = `badge label-${card.ackedLabel}`;
      badge.dataset.testid = "label-badge";
      badge.textContent = card.ackedLabel;
      caption.appendChild(badge);
    }
    if (card.unsynced !== null) {
      const marker = document.createElement("span");
      marker.className = "badge unsynced";
      marker.dataset.testid = "unsynced";
      marker.textContent = `unsynced: ${card.unsynced}`;
      caption.appendChild(marker);
      const retry = document.createElement("button");
      retry.textContent = "retry";
      retry.dataset.testid = "retry";
      retry.onclick = (event) => {
        event.stopPropagation();
        this.retry(card);
      };
      caption.appendChild(retry);
    }
    element.appendChild(caption);
    return element;
  }
}
