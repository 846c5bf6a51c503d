// Single-page composer: palette -> canvas -> search gallery -> synthesize.
// All numbers shown (distances, boxes, layouts) come from API responses;
// the client only draws what the service sent back.

import { ApiClient, ApiError, isAbort } from "./api.js";
import {
  decodeBase64,
  grayToRgba,
  parsePgm,
  parsePpm,
  rgbToRgba,
  RgbImage,
  GrayImage,
} from "./pgm.js";
import { glyphRasterBase64 } from "./glyphs.js";
import {
  addCropObject,
  addSketchObject,
  CanvasObject,
  ComposerState,
  emptyState,
  flipObject,
  GRID_CELLS,
  MAX_OBJECTS,
  moveObject,
  removeObject,
  resizeObject,
  serialize,
  validate,
} from "./state.js";
import { ClassInfo, SearchResult } from "./types.js";

const CANVAS_PX = 480;
const HANDLE_PX = 10;

function el<K extends keyof HTMLElementTagNameMap>(tag: K, cls?: string,
                                                   text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function grayCanvas(img: GrayImage, flipped = false): HTMLCanvasElement {
  const c = document.createElement("canvas");
  c.width = img.width;
  c.height = img.height;
  const ctx = c.getContext("2d")!;
  const data = ctx.createImageData(img.width, img.height);
  data.data.set(grayToRgba(img));
  ctx.putImageData(data, 0, 0);
  if (flipped) {
    const f = document.createElement("canvas");
    f.width = img.width;
    f.height = img.height;
    const fctx = f.getContext("2d")!;
    fctx.scale(-1, 1);
    fctx.drawImage(c, -img.width, 0);
    return f;
  }
  return c;
}

function rgbCanvas(img: RgbImage): HTMLCanvasElement {
  const c = document.createElement("canvas");
  c.width = img.width;
  c.height = img.height;
  const ctx = c.getContext("2d")!;
  const data = ctx.createImageData(img.width, img.height);
  data.data.set(rgbToRgba(img));
  ctx.putImageData(data, 0, 0);
  return c;
}

type Drag =
  | { kind: "move"; id: number; lastX: number; lastY: number }
  | { kind: "resize"; id: number };

export class App {
  private api: ApiClient;
  private state: ComposerState = emptyState();
  private classes: ClassInfo[] = [];
  private selectedClass: ClassInfo | null = null;
  private selectedObject: number | null = null;
  selectedResult: string | null = null;
  private drag: Drag | null = null;
  private rasterCache = new Map<number, HTMLCanvasElement>();
  private lastAction: (() => void) | null = null;

  private canvas!: HTMLCanvasElement;
  private palette!: HTMLElement;
  private gallery!: HTMLElement;
  private preview!: HTMLElement;
  private status!: HTMLElement;
  private objectBar!: HTMLElement;

  constructor(api: ApiClient, root: HTMLElement) {
    this.api = api;
    this.build(root);
  }

  async start(): Promise<void> {
    try {
      const health = await this.api.health();
      const classes = await this.api.classes();
      this.classes = classes.classes;
      this.renderPalette();
      this.note(`connected: checkpoint ${health.checkpoint.slice(0, 12)}, ` +
                `${health.corpus_size} indexed scenes`);
    } catch (err) {
      this.fail(err, () => void this.start());
    }
    this.redraw();
  }

  // ---- layout ----------------------------------------------------------

  private build(root: HTMLElement): void {
    const left = el("div", "column palette-column");
    left.appendChild(el("h2", undefined, "Glyphs"));
    this.palette = el("div", "palette");
    left.appendChild(this.palette);

    const center = el("div", "column canvas-column");
    const bar = el("div", "toolbar");
    const searchBtn = el("button", undefined, "Search");
    searchBtn.id = "search";
    searchBtn.addEventListener("click", () => this.runSearch());
    const synthBtn = el("button", undefined, "Synthesize");
    synthBtn.id = "synthesize";
    synthBtn.addEventListener("click", () => this.runSynthesize());
    const clearBtn = el("button", undefined, "Clear");
    clearBtn.addEventListener("click", () => {
      this.state = emptyState();
      this.selectedObject = null;
      this.rasterCache.clear();
      this.redraw();
    });
    bar.append(searchBtn, synthBtn, clearBtn);
    center.appendChild(bar);

    this.canvas = document.createElement("canvas");
    this.canvas.id = "composer";
    this.canvas.width = CANVAS_PX;
    this.canvas.height = CANVAS_PX;
    this.wireCanvas();
    center.appendChild(this.canvas);

    this.objectBar = el("div", "object-bar");
    center.appendChild(this.objectBar);
    this.status = el("div", "status");
    this.status.id = "status";
    center.appendChild(this.status);

    const right = el("div", "column results-column");
    right.appendChild(el("h2", undefined, "Results"));
    this.gallery = el("div", "gallery");
    this.gallery.id = "gallery";
    right.appendChild(this.gallery);
    right.appendChild(el("h2", undefined, "Synthesized layout"));
    this.preview = el("div", "preview");
    this.preview.id = "preview";
    right.appendChild(this.preview);

    root.append(left, center, right);
  }

  private renderPalette(): void {
    this.palette.textContent = "";
    for (const cls of this.classes) {
      const cell = el("div", "palette-cell");
      cell.dataset.classId = String(cls.class_id);
      const img = grayCanvas(parsePgm(decodeBase64(glyphRasterBase64(cls.name))));
      img.className = "thumb";
      cell.append(img, el("span", undefined, cls.name));
      cell.addEventListener("click", () => {
        this.selectedClass = cls;
        this.note(`place: click the canvas to drop a ${cls.name}`);
        for (const other of Array.from(this.palette.children)) {
          other.classList.toggle("selected", other === cell);
        }
      });
      this.palette.appendChild(cell);
    }
  }

  // ---- canvas interaction ----------------------------------------------

  private toUnit(ev: MouseEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return {
      x: Math.min(Math.max((ev.clientX - rect.left) / rect.width, 0), 1),
      y: Math.min(Math.max((ev.clientY - rect.top) / rect.height, 0), 1),
    };
  }

  private hit(x: number, y: number): CanvasObject | null {
    for (let i = this.state.objects.length - 1; i >= 0; i--) {
      const o = this.state.objects[i];
      if (x >= o.box.x0 && x <= o.box.x1 && y >= o.box.y0 && y <= o.box.y1) return o;
    }
    return null;
  }

  private onHandle(obj: CanvasObject, x: number, y: number): boolean {
    const hx = HANDLE_PX / CANVAS_PX;
    return Math.abs(x - obj.box.x1) < hx && Math.abs(y - obj.box.y1) < hx;
  }

  private wireCanvas(): void {
    this.canvas.addEventListener("mousedown", (ev) => {
      const { x, y } = this.toUnit(ev);
      const obj = this.hit(x, y);
      if (obj) {
        this.selectedObject = obj.id;
        this.drag = this.onHandle(obj, x, y)
          ? { kind: "resize", id: obj.id }
          : { kind: "move", id: obj.id, lastX: x, lastY: y };
      } else if (this.selectedClass) {
        this.placeGlyph(this.selectedClass, x, y);
      } else {
        this.selectedObject = null;
      }
      this.redraw();
    });
    this.canvas.addEventListener("mousemove", (ev) => {
      if (!this.drag) return;
      const { x, y } = this.toUnit(ev);
      if (this.drag.kind === "move") {
        moveObject(this.state, this.drag.id, x - this.drag.lastX, y - this.drag.lastY);
        this.drag.lastX = x;
        this.drag.lastY = y;
      } else {
        resizeObject(this.state, this.drag.id, x, y);
      }
      this.redraw();
    });
    window.addEventListener("mouseup", () => {
      this.drag = null;
    });

    // crops dragged out of gallery results
    this.canvas.addEventListener("dragover", (ev) => ev.preventDefault());
    this.canvas.addEventListener("drop", (ev) => {
      ev.preventDefault();
      const payload = ev.dataTransfer?.getData("application/x-crop");
      if (!payload) return;
      const { cropRef, classId, className } = JSON.parse(payload);
      const rect = this.canvas.getBoundingClientRect();
      const x = (ev.clientX - rect.left) / rect.width;
      const y = (ev.clientY - rect.top) / rect.height;
      void this.dropCrop(cropRef, classId, className, x, y);
    });
  }

  placeGlyph(cls: ClassInfo, cx: number, cy: number): void {
    if (this.state.objects.length >= MAX_OBJECTS) {
      this.note(`at most ${MAX_OBJECTS} objects`);
      return;
    }
    const half = 0.1;
    const obj = addSketchObject(this.state, cls.class_id, cls.name,
                                glyphRasterBase64(cls.name),
                                { x0: cx - half, y0: cy - half, x1: cx + half, y1: cy + half });
    this.selectedObject = obj.id;
    this.redraw();
  }

  async dropCrop(cropRef: string, classId: number, className: string,
                 cx: number, cy: number): Promise<void> {
    if (this.state.objects.length >= MAX_OBJECTS) {
      this.note(`at most ${MAX_OBJECTS} objects`);
      return;
    }
    const half = 0.1;
    const obj = addCropObject(this.state, cropRef, classId, className,
                              { x0: cx - half, y0: cy - half, x1: cx + half, y1: cy + half });
    this.selectedObject = obj.id;
    this.redraw();
    try {
      const crop = await this.api.crop(cropRef);
      obj.raster = crop.raster; // thumbnail for display and for flips
      this.rasterCache.delete(obj.id);
      this.redraw();
    } catch (err) {
      this.fail(err, () => void this.dropCrop(cropRef, classId, className, cx, cy));
    }
  }

  private objectCanvas(obj: CanvasObject): HTMLCanvasElement | null {
    if (obj.raster === null) return null;
    const cached = this.rasterCache.get(obj.id);
    if (cached && cached.dataset.flipped === String(obj.flipped)) return cached;
    const c = grayCanvas(parsePgm(decodeBase64(obj.raster)), obj.flipped);
    c.dataset.flipped = String(obj.flipped);
    this.rasterCache.set(obj.id, c);
    return c;
  }

  redraw(): void {
    const ctx = this.canvas.getContext("2d")!;
    ctx.fillStyle = "#fdfcf7";
    ctx.fillRect(0, 0, CANVAS_PX, CANVAS_PX);

    ctx.strokeStyle = "#d8d4c8";
    ctx.lineWidth = 1;
    for (let i = 1; i < GRID_CELLS; i++) {
      const p = (i / GRID_CELLS) * CANVAS_PX;
      ctx.beginPath();
      ctx.moveTo(p, 0);
      ctx.lineTo(p, CANVAS_PX);
      ctx.moveTo(0, p);
      ctx.lineTo(CANVAS_PX, p);
      ctx.stroke();
    }

    for (const obj of this.state.objects) {
      const x = obj.box.x0 * CANVAS_PX;
      const y = obj.box.y0 * CANVAS_PX;
      const w = (obj.box.x1 - obj.box.x0) * CANVAS_PX;
      const h = (obj.box.y1 - obj.box.y0) * CANVAS_PX;
      const img = this.objectCanvas(obj);
      if (img) ctx.drawImage(img, x, y, w, h);
      ctx.strokeStyle = obj.domain === "photo" ? "#b3571f" : "#35506e";
      ctx.lineWidth = obj.id === this.selectedObject ? 2.5 : 1;
      ctx.strokeRect(x, y, w, h);
      if (obj.id === this.selectedObject) {
        ctx.fillStyle = "#35506e";
        ctx.fillRect(obj.box.x1 * CANVAS_PX - HANDLE_PX / 2,
                     obj.box.y1 * CANVAS_PX - HANDLE_PX / 2, HANDLE_PX, HANDLE_PX);
      }
      ctx.fillStyle = "#444";
      ctx.font = "11px sans-serif";
      ctx.fillText(`${obj.className} (${obj.domain})`, x + 2, y - 3);
    }
    this.renderObjectBar();
  }

  private renderObjectBar(): void {
    this.objectBar.textContent = "";
    const obj = this.state.objects.find((o) => o.id === this.selectedObject);
    if (!obj) return;
    const label = el("span", undefined,
                     `#${obj.id} ${obj.className} [${obj.domain}]`);
    const flip = el("button", undefined, obj.flipped ? "Unflip" : "Flip");
    flip.className = "flip";
    flip.addEventListener("click", () => void this.toggleFlip(obj.id));
    const del = el("button", undefined, "Delete");
    del.addEventListener("click", () => {
      removeObject(this.state, obj.id);
      this.selectedObject = null;
      this.redraw();
    });
    this.objectBar.append(label, flip, del);
  }

  async toggleFlip(id: number): Promise<void> {
    const obj = this.state.objects.find((o) => o.id === id);
    if (!obj) return;
    if (obj.raster === null && obj.cropRef !== null) {
      // flips are applied to the raster, so hydrate it first
      try {
        const crop = await this.api.crop(obj.cropRef);
        obj.raster = crop.raster;
      } catch (err) {
        this.fail(err, () => void this.toggleFlip(id));
        return;
      }
    }
    flipObject(this.state, id);
    this.rasterCache.delete(id);
    this.redraw();
  }

  // ---- service calls ----------------------------------------------------

  async runSearch(): Promise<void> {
    this.lastAction = () => void this.runSearch();
    const problem = validate(this.state);
    if (problem) {
      this.note(`blocked: ${problem}`);
      return;
    }
    this.note("searching...");
    try {
      const resp = await this.api.search(serialize(this.state, 10));
      this.renderGallery(resp.results);
      this.note(`${resp.results.length} results`);
    } catch (err) {
      if (!isAbort(err)) this.fail(err, this.lastAction);
    }
  }

  async runSynthesize(): Promise<void> {
    this.lastAction = () => void this.runSynthesize();
    const problem = validate(this.state);
    if (problem) {
      this.note(`blocked: ${problem}`);
      return;
    }
    this.note("synthesizing...");
    try {
      const resp = await this.api.synthesize(serialize(this.state));
      this.preview.textContent = "";
      const img = rgbCanvas(parsePpm(decodeBase64(resp.layout_ppm)));
      img.className = "layout";
      this.preview.appendChild(img);
      const boxes = el("div", "boxes");
      resp.boxes.forEach((b, i) => {
        const name = this.classes[resp.class_ids[i]]?.name ?? `class ${resp.class_ids[i]}`;
        boxes.appendChild(el("div", undefined,
          `${name}: [${b.map((v) => v.toFixed(3)).join(", ")}]`));
      });
      this.preview.appendChild(boxes);
      this.note("layout rendered");
    } catch (err) {
      if (!isAbort(err)) this.fail(err, this.lastAction);
    }
  }

  private renderGallery(results: SearchResult[]): void {
    this.gallery.textContent = "";
    this.selectedResult = null;
    for (const r of results) {
      const card = el("div", "result");
      card.dataset.sceneId = r.scene_id;
      card.addEventListener("click", () => {
        this.selectedResult = r.scene_id;
        for (const other of Array.from(this.gallery.children)) {
          other.classList.toggle("selected", other === card);
        }
      });
      card.appendChild(el("div", "result-title",
                          `${r.scene_id}  d=${r.distance.toFixed(4)}`));
      const thumbSlot = el("div", "result-thumb");
      card.appendChild(thumbSlot);
      const cropsRow = el("div", "result-crops");
      card.appendChild(cropsRow);
      this.gallery.appendChild(card);
      void this.fillResult(r, thumbSlot, cropsRow);
    }
  }

  /** Thumbnails arrive as part of the scene payload; crops are draggable. */
  private async fillResult(r: SearchResult, thumbSlot: HTMLElement,
                           cropsRow: HTMLElement): Promise<void> {
    try {
      const scene = await this.api.scene(r.scene_id);
      const thumb = rgbCanvas(parsePpm(decodeBase64(scene.thumbnail_ppm)));
      thumb.className = "thumb-large";
      thumbSlot.appendChild(thumb);
      scene.objects.forEach((o, i) => {
        const crop = grayCanvas(parsePgm(decodeBase64(o.raster)));
        crop.className = "crop";
        crop.draggable = true;
        crop.title = `${this.classes[o.class_id]?.name ?? o.class_id} — drag onto canvas`;
        crop.addEventListener("dragstart", (ev) => {
          ev.dataTransfer?.setData("application/x-crop", JSON.stringify({
            cropRef: o.crop_ref ?? `${r.scene_id}:${i}`,
            classId: o.class_id,
            className: this.classes[o.class_id]?.name ?? String(o.class_id),
          }));
        });
        cropsRow.appendChild(crop);
      });
    } catch (err) {
      if (!isAbort(err)) thumbSlot.appendChild(el("span", "error", "failed to load"));
    }
  }

  // ---- status -----------------------------------------------------------

  private note(msg: string): void {
    this.status.textContent = "";
    this.status.appendChild(el("span", undefined, msg));
  }

  private fail(err: unknown, retry: (() => void) | null): void {
    const msg = err instanceof ApiError ? err.message : String(err);
    this.status.textContent = "";
    this.status.appendChild(el("span", "error", `error: ${msg}`));
    if (retry) {
      const btn = el("button", undefined, "Retry");
      btn.addEventListener("click", retry);
      this.status.appendChild(btn);
    }
  }
}

export function mount(root: HTMLElement, baseUrl: string): App {
  const app = new App(new ApiClient(baseUrl), root);
  void app.start();
  return app;
}
