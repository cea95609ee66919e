/** DOM rendering for the review app: queue list, sample inspector, preview canvas. */

import { ApiClient, DecisionOutbox } from "./api.js";
import {
  checkerboard,
  compositeLayers,
  flattenOver,
  type CompositeLayer,
} from "./compositor.js";
import { SessionState } from "./state.js";
import type { LayerSummary, SampleDetail } from "./types.js";

interface DecodedLayer {
  summary: LayerSummary;
  pixels: Uint8ClampedArray;
  width: number;
  height: number;
}

async function decodePng(url: string): Promise<{ pixels: Uint8ClampedArray; width: number; height: number }> {
  const response = await fetch(url);
  if (!response.ok) {
    throw new Error(`fetch ${url}: ${response.status}`);
  }
  const bitmap = await createImageBitmap(await response.blob());
  const canvas = new OffscreenCanvas(bitmap.width, bitmap.height);
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const data = ctx.getImageData(0, 0, bitmap.width, bitmap.height);
  return { pixels: data.data, width: data.width, height: data.height };
}

function paint(canvas: HTMLCanvasElement, rgba: Uint8ClampedArray, width: number, height: number): void {
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d")!;
  // copy into a fresh ArrayBuffer-backed view; ImageData rejects ArrayBufferLike
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), width, height), 0, 0);
}

export class ReviewApp {
  private state: SessionState;
  private client: ApiClient;
  private outbox: DecisionOutbox;
  private decoded: DecodedLayer[] = [];
  private root: HTMLElement;

  constructor(root: HTMLElement, reviewer: string) {
    this.root = root;
    this.state = new SessionState(reviewer);
    this.client = new ApiClient("");
    this.outbox = new DecisionOutbox(this.client, (pending) => this.renderPendingBadge(pending));
    window.addEventListener("online", () => void this.flushOutbox());
    setInterval(() => void this.flushOutbox(), 15_000);
    document.addEventListener("keydown", (ev) => this.onKey(ev));
  }

  async start(): Promise<void> {
    this.root.innerHTML = `
      <header>
        <h1>layer review</h1>
        <span id="queue-count"></span>
        <span id="pending-badge" hidden></span>
        <span id="banner" hidden></span>
      </header>
      <main>
        <nav id="queue"></nav>
        <section id="inspector"><p class="hint">pick a sample — a: accept, r: reject, 1-9: toggle layers</p></section>
      </main>`;
    await this.loadQueue();
  }

  private banner(text: string, isError = false): void {
    const el = this.root.querySelector<HTMLElement>("#banner")!;
    el.textContent = text;
    el.hidden = !text;
    el.classList.toggle("error", isError);
  }

  private renderPendingBadge(pending: number): void {
    const badge = this.root.querySelector<HTMLElement>("#pending-badge")!;
    badge.hidden = pending === 0;
    badge.textContent = pending > 0 ? `${pending} pending` : "";
  }

  private async flushOutbox(): Promise<void> {
    const delivered = await this.outbox.flush();
    this.renderPendingBadge(this.outbox.pending.length);
    if (delivered > 0) {
      this.banner("");
      await this.loadQueue();
    }
  }

  async loadQueue(): Promise<void> {
    try {
      const page = await this.client.getQueue(this.state.page, 20);
      this.state.setQueue(page.items, page.total, page.page);
      this.banner("");
    } catch {
      this.banner("queue fetch failed — retrying stays safe", true);
      return;
    }
    const nav = this.root.querySelector<HTMLElement>("#queue")!;
    nav.innerHTML = "";
    this.root.querySelector("#queue-count")!.textContent = `${this.state.queueTotal} queued`;
    for (const item of this.state.queue) {
      const button = document.createElement("button");
      button.className = "queue-item";
      const flagged = item.layers.some((l) => l.artifact_flagged);
      button.innerHTML = `<img src="${item.thumbnail_url}" alt=""><span>${item.sample_id}</span>` +
        (flagged ? `<span class="flag">artifact</span>` : "");
      button.addEventListener("click", () => void this.open(item.sample_id));
      nav.appendChild(button);
    }
  }

  async open(sampleId: string): Promise<void> {
    let detail: SampleDetail;
    try {
      detail = await this.client.getSample(sampleId);
      this.decoded = await Promise.all(
        detail.layers.map(async (summary) => ({
          summary,
          ...(await decodePng(summary.url!)),
        })),
      );
    } catch {
      this.banner("sample fetch failed — selection unchanged", true);
      return;
    }
    this.state.select(detail);
    this.renderInspector();
  }

  private compositeVisible(): { rgba: Uint8ClampedArray; width: number; height: number } {
    const detail = this.state.selected!;
    const [width, height] = detail.canvas;
    const layers: CompositeLayer[] = this.decoded.map((d, i) => ({
      pixels: d.pixels,
      width: d.width,
      height: d.height,
      x: d.summary.bbox[0],
      y: d.summary.bbox[1],
      z: d.summary.z,
      visible: this.state.visibility[i],
    }));
    return { rgba: compositeLayers(width, height, layers), width, height };
  }

  private renderInspector(): void {
    const detail = this.state.selected;
    if (!detail) return;
    const section = this.root.querySelector<HTMLElement>("#inspector")!;
    section.innerHTML = `
      <h2>${detail.sample_id}</h2>
      <p>${detail.global_caption || ""} ${detail.style ? `<em>[${detail.style}]</em>` : ""}</p>
      <canvas id="preview"></canvas>
      <div id="strip"></div>
      <div class="actions">
        <button id="accept">accept (a)</button>
        <button id="reject">reject (r)</button>
      </div>`;
    this.renderPreview();
    const strip = section.querySelector<HTMLElement>("#strip")!;
    this.decoded.forEach((layer, i) => {
      const cell = document.createElement("div");
      cell.className = "layer-cell" + (this.state.visibility[i] ? "" : " off") +
        (layer.summary.artifact_flagged ? " flagged" : "");
      const canvas = document.createElement("canvas");
      const backdrop = checkerboard(layer.width, layer.height);
      paint(canvas, flattenOver(layer.pixels, backdrop), layer.width, layer.height);
      const tips = layer.summary.tips_score;
      cell.appendChild(canvas);
      cell.insertAdjacentHTML(
        "beforeend",
        `<span class="meta">${i + 1}: ${layer.summary.kind}` +
          (tips != null ? ` · tips ${tips.toFixed(3)}` : "") +
          (layer.summary.artifact_flagged ? " · ⚠ artifact" : "") +
          `</span><span class="cap">${layer.summary.caption}</span>`,
      );
      cell.addEventListener("click", () => {
        this.state.toggleLayer(i);
        this.renderInspector();
      });
      strip.appendChild(cell);
    });
    section.querySelector("#accept")!.addEventListener("click", () => void this.decide("accept"));
    section.querySelector("#reject")!.addEventListener("click", () => void this.decide("reject"));
  }

  private renderPreview(): void {
    const { rgba, width, height } = this.compositeVisible();
    const canvas = this.root.querySelector<HTMLCanvasElement>("#preview")!;
    paint(canvas, flattenOver(rgba, checkerboard(width, height)), width, height);
  }

  private async decide(verdict: "accept" | "reject"): Promise<void> {
    if (!this.state.selected) return;
    let decision;
    try {
      decision = this.state.draft(verdict);
    } catch (err) {
      this.banner(String(err), true);
      return;
    }
    const result = await this.outbox.submit(decision);
    if (!result.delivered) {
      this.banner("offline — decision queued, will deliver on reconnect", true);
    }
    this.state.clearSelection();
    this.decoded = [];
    this.root.querySelector<HTMLElement>("#inspector")!.innerHTML =
      `<p class="hint">decision ${result.delivered ? "recorded" : "pending"} — pick the next sample</p>`;
    await this.loadQueue();
  }

  private onKey(ev: KeyboardEvent): void {
    if (!this.state.selected) return;
    if (ev.key === "a") {
      void this.decide("accept");
    } else if (ev.key === "r") {
      void this.decide("reject");
    } else if (ev.key >= "1" && ev.key <= "9") {
      if (this.state.toggleLayer(Number(ev.key) - 1)) {
        this.renderInspector();
      }
    }
  }
}
