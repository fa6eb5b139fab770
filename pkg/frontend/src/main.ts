/**
 * Annotation UI wiring: one canvas, a class palette, brush labeling with
 * undo, train/apply buttons and a prediction overlay. Single user per
 * session; featurize/apply progress is polled in the background.
 */

import { ApiError, Client, SessionStatus } from "./api.js";
import type { Point } from "./raster.js";
import { clientToImage, initialView, LabelState, ViewState, zoomAt } from "./state.js";
import { classColor, Renderer } from "./overlay.js";

const params = new URLSearchParams(window.location.search);
const api = new Client(params.get("api") ?? window.location.origin);

interface AppState {
  sessionId: string | null;
  palette: number[];
  images: string[];
  activeImage: string | null;
  image: HTMLImageElement | null;
  labels: LabelState | null;
  prediction: HTMLImageElement | null;
  classifierVersion: number | null;
  view: ViewState;
  drawing: Point[] | null;
  busy: string | null;
}

const state: AppState = {
  sessionId: null,
  palette: [1, 2, 3, 4, 5],
  images: [],
  activeImage: null,
  image: null,
  labels: null,
  prediction: null,
  classifierVersion: null,
  view: initialView(),
  drawing: null,
  busy: null,
};

const canvas = document.getElementById("viewport") as HTMLCanvasElement;
const renderer = new Renderer(canvas);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function toast(message: string, isError = true): void {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.className = isError ? "toast error" : "toast";
  box.style.opacity = "1";
  window.setTimeout(() => (box.style.opacity = "0"), 4000);
}

function surface(err: unknown): void {
  if (err instanceof ApiError) toast(`${err.status}: ${err.message}`);
  else toast(String(err));
}

function redraw(): void {
  renderer.render(state.view, state.image, state.labels?.compose() ?? null, state.prediction);
  el<HTMLSpanElement>("status-line").textContent = [
    state.sessionId ? `session ${state.sessionId}` : "no session",
    state.activeImage ? `image ${state.activeImage}` : "",
    state.classifierVersion ? `classifier v${state.classifierVersion}` : "",
    state.busy ?? "",
  ]
    .filter(Boolean)
    .join(" | ");
}

function renderPalette(): void {
  const box = el<HTMLDivElement>("palette");
  box.innerHTML = "";
  for (const classId of state.palette) {
    const [r, g, b] = classColor(classId);
    const button = document.createElement("button");
    button.textContent = String(classId);
    button.style.background = `rgb(${r},${g},${b})`;
    button.className = classId === state.view.activeClass ? "class active" : "class";
    button.onclick = () => {
      state.view.activeClass = classId;
      renderPalette();
    };
    box.appendChild(button);
  }
}

function renderGallery(status: SessionStatus): void {
  const box = el<HTMLDivElement>("gallery");
  box.innerHTML = "";
  for (const imageId of status.images) {
    const item = document.createElement("button");
    const tags: string[] = [];
    if (status.labeled.includes(imageId)) tags.push("labeled");
    item.textContent = imageId + (tags.length ? ` (${tags.join(",")})` : "");
    item.className = imageId === state.activeImage ? "thumb active" : "thumb";
    item.onclick = () => void selectImage(imageId);
    box.appendChild(item);
  }
}

async function refreshStatus(): Promise<SessionStatus | null> {
  if (!state.sessionId) return null;
  const status = await api.status(state.sessionId);
  state.images = status.images;
  state.palette = status.config.classes ?? state.palette;
  renderGallery(status);
  renderPalette();
  return status;
}

async function selectImage(imageId: string): Promise<void> {
  if (!state.sessionId) return;
  state.activeImage = imageId;
  state.prediction = null;
  // images are uploaded by this client, so a local object-URL copy exists
  const cached = imageStore.get(imageId);
  if (!cached) {
    toast(`no local copy of ${imageId}; re-open the file`, true);
    return;
  }
  await cached.decode();
  state.image = cached;
  state.labels = new LabelState(cached.naturalWidth, cached.naturalHeight, state.palette);
  state.view = initialView();
  redraw();
  void refreshStatus();
}

const imageStore = new Map<string, HTMLImageElement>();

async function handleUpload(files: FileList | null): Promise<void> {
  if (!files || !state.sessionId) return;
  for (const file of Array.from(files)) {
    const imageId = file.name.replace(/\.[^.]+$/, "");
    try {
      await api.uploadImage(state.sessionId, imageId, file);
      const image = new Image();
      image.src = URL.createObjectURL(file);
      imageStore.set(imageId, image);
    } catch (err) {
      surface(err);
    }
  }
  await refreshStatus();
}

function pollFeaturize(): void {
  const handle = window.setInterval(async () => {
    try {
      const status = await refreshStatus();
      if (!status) return;
      const f = status.featurize;
      state.busy = f.state === "running" ? `featurizing ${f.done}/${f.total}` : null;
      redraw();
      if (f.state !== "running") {
        window.clearInterval(handle);
        if (f.state === "error") toast(`featurize failed: ${f.error}`);
        else toast("featurization complete", false);
        el<HTMLButtonElement>("train").disabled = f.state !== "done";
      }
    } catch (err) {
      window.clearInterval(handle);
      surface(err);
    }
  }, 500);
}

async function submitLabels(): Promise<void> {
  if (!state.sessionId || !state.activeImage || !state.labels) return;
  const payload = state.labels.toUpload();
  try {
    const result = await api.putLabels(state.sessionId, state.activeImage, payload);
    toast(`saved ${result.labeled_pixels} labeled pixels`, false);
    await refreshStatus();
  } catch (err) {
    surface(err); // strokes stay local so nothing is lost on failure
  }
}

async function train(): Promise<void> {
  if (!state.sessionId) return;
  state.busy = "training";
  redraw();
  try {
    const result = await api.train(state.sessionId);
    state.classifierVersion = result.version;
    toast(`trained classifier v${result.version}`, false);
    await loadPrediction();
  } catch (err) {
    surface(err);
  } finally {
    state.busy = null;
    redraw();
  }
}

async function loadPrediction(): Promise<void> {
  if (!state.sessionId || !state.activeImage || !state.classifierVersion) return;
  const image = new Image();
  image.crossOrigin = "anonymous";
  image.src =
    api.predictionUrl(state.sessionId, state.activeImage, state.classifierVersion) +
    `&_=${Date.now()}`;
  try {
    await image.decode();
    state.prediction = image;
    state.view.overlay = "prediction";
    redraw();
  } catch {
    toast("prediction fetch failed");
  }
}

async function applyAll(): Promise<void> {
  if (!state.sessionId) return;
  state.busy = "applying to gallery";
  redraw();
  try {
    const result = await api.apply(state.sessionId);
    toast(`predicted ${result.predicted.length} images`, false);
  } catch (err) {
    surface(err);
  } finally {
    state.busy = null;
    redraw();
  }
}

function canvasPoint(event: PointerEvent): Point {
  const rect = canvas.getBoundingClientRect();
  return clientToImage(state.view, event.clientX - rect.left, event.clientY - rect.top);
}

function wireCanvas(): void {
  canvas.addEventListener("pointerdown", (event) => {
    if (!state.labels) return;
    if (event.button !== 0 || event.shiftKey) return; // shift-drag pans
    state.drawing = [canvasPoint(event)];
    canvas.setPointerCapture(event.pointerId);
  });
  canvas.addEventListener("pointermove", (event) => {
    if (event.shiftKey && event.buttons === 1) {
      state.view.panX += event.movementX;
      state.view.panY += event.movementY;
      redraw();
      return;
    }
    if (!state.drawing) return;
    state.drawing.push(canvasPoint(event));
    if (state.labels) {
      // live preview: compose with the in-progress stroke, then pop it
      const preview = state.labels;
      preview.addStroke({
        classId: state.view.activeClass,
        radius: state.view.brushRadius,
        points: [...state.drawing],
      });
      redraw();
      preview.undo();
    }
  });
  canvas.addEventListener("pointerup", () => {
    if (!state.drawing || !state.labels) return;
    try {
      state.labels.addStroke({
        classId: state.view.activeClass,
        radius: state.view.brushRadius,
        points: state.drawing,
      });
    } catch (err) {
      surface(err);
    }
    state.drawing = null;
    redraw();
  });
  canvas.addEventListener("wheel", (event) => {
    event.preventDefault();
    const rect = canvas.getBoundingClientRect();
    state.view = zoomAt(
      state.view,
      event.deltaY < 0 ? 1.25 : 0.8,
      event.clientX - rect.left,
      event.clientY - rect.top,
    );
    redraw();
  });
}

function wireControls(): void {
  el<HTMLButtonElement>("new-session").onclick = async () => {
    try {
      const info = await api.createSession();
      state.sessionId = info.id;
      state.palette = info.config.classes;
      el<HTMLButtonElement>("train").disabled = true;
      renderPalette();
      await refreshStatus();
      redraw();
    } catch (err) {
      surface(err);
    }
  };
  el<HTMLInputElement>("file-input").onchange = (event) =>
    void handleUpload((event.target as HTMLInputElement).files);
  el<HTMLButtonElement>("featurize").onclick = async () => {
    if (!state.sessionId) return;
    try {
      await api.featurize(state.sessionId);
      pollFeaturize();
    } catch (err) {
      surface(err);
    }
  };
  el<HTMLButtonElement>("undo").onclick = () => {
    if (state.labels?.undo()) redraw();
  };
  el<HTMLButtonElement>("submit-labels").onclick = () => void submitLabels();
  el<HTMLButtonElement>("train").onclick = () => void train();
  el<HTMLButtonElement>("apply").onclick = () => void applyAll();
  el<HTMLSelectElement>("overlay-mode").onchange = (event) => {
    state.view.overlay = (event.target as HTMLSelectElement).value as ViewState["overlay"];
    redraw();
  };
  el<HTMLInputElement>("overlay-alpha").oninput = (event) => {
    state.view.overlayAlpha = Number((event.target as HTMLInputElement).value);
    redraw();
  };
  el<HTMLInputElement>("brush-radius").oninput = (event) => {
    state.view.brushRadius = Number((event.target as HTMLInputElement).value);
  };
}

wireCanvas();
wireControls();
renderPalette();
redraw();
