/**
 * Session state for one reviewer tab: queue paging, the selected sample,
 * layer visibility toggles, and the pending decision draft.
 *
 * The draft can only ever reference layers of the currently selected sample;
 * toggles reset whenever the selection changes.
 */

import type { Decision, QueueItem, SampleDetail, Verdict } from "./types.js";

export class SessionState {
  reviewer: string;
  page = 0;
  queueTotal = 0;
  queue: QueueItem[] = [];
  selected: SampleDetail | null = null;
  visibility: boolean[] = [];

  constructor(reviewer: string) {
    this.reviewer = reviewer;
  }

  setQueue(items: QueueItem[], total: number, page: number): void {
    this.queue = items;
    this.queueTotal = total;
    this.page = page;
  }

  select(detail: SampleDetail): void {
    this.selected = detail;
    this.visibility = detail.layers.map(() => true);
  }

  clearSelection(): void {
    this.selected = null;
    this.visibility = [];
  }

  toggleLayer(index: number): boolean {
    if (!this.selected || index < 0 || index >= this.visibility.length) {
      return false;
    }
    this.visibility[index] = !this.visibility[index];
    return true;
  }

  hiddenLayers(): number[] {
    return this.visibility.flatMap((visible, i) => (visible ? [] : [i]));
  }

  /**
   * Build the decision draft. An accept with hidden layers becomes
   * accept_with_layer_rejects over exactly those layers.
   */
  draft(verdict: "accept" | "reject", note = ""): Decision {
    if (!this.selected) {
      throw new Error("no sample selected");
    }
    const hidden = this.hiddenLayers();
    let finalVerdict: Verdict = verdict;
    let rejects: number[] = [];
    if (verdict === "accept" && hidden.length > 0) {
      if (hidden.length >= this.selected.layers.length) {
        throw new Error("cannot accept a sample with every layer rejected");
      }
      finalVerdict = "accept_with_layer_rejects";
      rejects = hidden;
    }
    return {
      sample_id: this.selected.sample_id,
      verdict: finalVerdict,
      reviewer: this.reviewer,
      timestamp: Date.now() / 1000,
      layer_rejects: rejects,
      note,
    };
  }
}
