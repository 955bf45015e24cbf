/** Explorer page wiring: pad + sliders drive debounced decodes with
 * stale-response discard; grid mode shows a decoded lattice whose cells
 * pin the active pair and advance the browsing level; bookmarks export
 * service-rendered OBJ text verbatim. */

import { ApiClient, ApiError, LatestGate, debounce, type ServiceInfo } from "./api.js";
import {
  addBookmark,
  codeFileContents,
  loadBookmarks,
  objFileContents,
  triggerDownload,
  type Bookmark,
} from "./bookmarks.js";
import { Pad } from "./pad.js";
import {
  applyGridPick,
  formatCode,
  initialState,
  parseCode,
  pinActivePair,
  setPadPosition,
  setSlider,
  unpinAll,
  type ExplorerState,
} from "./state.js";
import { MeshViewer } from "./viewer.js";

const DEBOUNCE_MS = 80; // at most one request per pad/slider input window

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function banner(message: string, isError = true): void {
  const box = el<HTMLDivElement>("banner");
  box.textContent = message;
  box.className = isError ? "banner error" : "banner";
  box.style.display = message ? "block" : "none";
}

async function boot(): Promise<void> {
  const api = new ApiClient("");
  let info: ServiceInfo;
  let topology: { faces: number[][] };
  try {
    info = await api.info();
    topology = await api.topology();
  } catch (err) {
    banner(`service unreachable: ${err instanceof Error ? err.message : err}`);
    return;
  }
  banner("", false);

  let state: ExplorerState = initialState(info.latent_dim);
  const viewer = new MeshViewer(el("viewport"), info.bbox.diagonal);
  viewer.setTopology(topology.faces);

  const gate = new LatestGate();
  const decodeNow = async (): Promise<void> => {
    const code = state.code.slice();
    const condition = state.condition;
    try {
      const mesh = await gate.run(() => api.decode(code, condition));
      if (mesh) viewer.showVertices(mesh.vertices); // stale results skipped
    } catch (err) {
      if (err instanceof ApiError) banner(err.message);
    }
  };
  const decodeSoon = debounce(decodeNow, DEBOUNCE_MS);

  // condition picker
  const conditionBox = el<HTMLDivElement>("conditions");
  if (info.conditions.length > 0) {
    const selects: HTMLSelectElement[] = [];
    info.conditions.forEach((vocab) => {
      const select = document.createElement("select");
      vocab.forEach((token) => {
        const option = document.createElement("option");
        option.value = token;
        option.textContent = token;
        select.appendChild(option);
      });
      select.addEventListener("change", () => {
        state = { ...state, condition: selects.map((s) => s.value) };
        decodeSoon();
      });
      selects.push(select);
      conditionBox.appendChild(select);
    });
    state = { ...state, condition: selects.map((s) => s.value) };
  } else {
    conditionBox.style.display = "none";
  }

  // per-dimension sliders
  const sliderBox = el<HTMLDivElement>("sliders");
  const sliders: HTMLInputElement[] = [];
  for (let d = 0; d < info.latent_dim; d++) {
    const row = document.createElement("label");
    row.className = "slider-row";
    const caption = document.createElement("span");
    caption.textContent = `z${d + 1}`;
    const input = document.createElement("input");
    input.type = "range";
    input.min = "-2";
    input.max = "2";
    input.step = "0.01";
    input.value = "0";
    input.addEventListener("input", () => {
      state = setSlider(state, d, Number(input.value));
      syncPadMarker();
      decodeSoon();
    });
    row.append(caption, input);
    sliderBox.appendChild(row);
    sliders.push(input);
  }

  const pairLabel = el<HTMLSpanElement>("pair-label");
  const pad = new Pad(el<HTMLCanvasElement>("pad"), (x, y) => {
    state = setPadPosition(state, x, y);
    syncSliders();
    decodeSoon();
  });

  function syncSliders(): void {
    state.code.forEach((v, d) => {
      sliders[d].value = String(v);
      sliders[d].disabled = d in state.pinned;
    });
    pairLabel.textContent =
      `pad: z${state.activePair[0] + 1} / z${state.activePair[1] + 1}` +
      (Object.keys(state.pinned).length
        ? ` (pinned: ${Object.keys(state.pinned)
            .map((d) => `z${Number(d) + 1}`)
            .join(", ")})`
        : "");
  }

  function syncPadMarker(): void {
    pad.setMarker(state.code[state.activePair[0]], state.code[state.activePair[1]]);
    syncSliders();
  }

  el<HTMLButtonElement>("pin").addEventListener("click", () => {
    state = pinActivePair(state);
    syncPadMarker();
  });
  el<HTMLButtonElement>("reset").addEventListener("click", () => {
    state = unpinAll({ ...state, code: state.code.map(() => 0) });
    syncPadMarker();
    decodeSoon();
  });

  // grid browsing
  const gridBox = el<HTMLDivElement>("grid");
  el<HTMLButtonElement>("show-grid").addEventListener("click", async () => {
    gridBox.textContent = "decoding grid...";
    try {
      const res = state.grid.resolution;
      const { cells } = await api.grid(
        state.activePair,
        state.code,
        state.grid.range,
        res,
        state.condition,
      );
      gridBox.textContent = "";
      gridBox.style.gridTemplateColumns = `repeat(${res}, 1fr)`;
      cells.forEach((row, i) => {
        row.forEach((cell, j) => {
          const img = document.createElement("img");
          img.src = viewer.snapshot(cell.vertices, 96);
          img.title = `cell ${i},${j}`;
          img.addEventListener("click", () => {
            state = applyGridPick(state, i, j);
            syncPadMarker();
            decodeNow();
          });
          gridBox.appendChild(img);
        });
      });
    } catch (err) {
      banner(err instanceof Error ? err.message : String(err));
    }
  });

  // bookmarks + export
  const bookmarkList = el<HTMLUListElement>("bookmarks");
  const scrubber = el<HTMLInputElement>("scrubber");
  let frames: number[][][] = [];
  const selected: Bookmark[] = [];

  function renderBookmarks(): void {
    bookmarkList.textContent = "";
    loadBookmarks(window.localStorage).forEach((bookmark) => {
      const item = document.createElement("li");
      const pick = document.createElement("button");
      pick.textContent = bookmark.name;
      pick.addEventListener("click", () => {
        state = { ...state, code: bookmark.code.slice(), condition: bookmark.condition };
        syncPadMarker();
        decodeNow();
        selected.push(bookmark);
        if (selected.length > 2) selected.splice(0, selected.length - 2);
      });
      item.appendChild(pick);
      bookmarkList.appendChild(item);
    });
  }
  renderBookmarks();

  el<HTMLButtonElement>("bookmark").addEventListener("click", () => {
    const name = `code ${new Date().toISOString().slice(11, 19)}`;
    addBookmark(window.localStorage, {
      name,
      code: state.code.slice(),
      condition: state.condition,
    });
    renderBookmarks();
  });

  el<HTMLButtonElement>("export-obj").addEventListener("click", async () => {
    try {
      const obj = await api.decodeObj(state.code, state.condition);
      triggerDownload(document, "shape.obj", objFileContents(obj), "model/obj");
    } catch (err) {
      banner(err instanceof Error ? err.message : String(err));
    }
  });
  el<HTMLButtonElement>("export-code").addEventListener("click", () => {
    triggerDownload(document, "code.txt", codeFileContents(state.code));
  });
  el<HTMLButtonElement>("import-code").addEventListener("click", () => {
    const text = window.prompt("latent code (space separated)");
    if (!text) return;
    try {
      state = { ...state, code: parseCode(text, info.latent_dim) };
      syncPadMarker();
      decodeNow();
    } catch (err) {
      banner(err instanceof Error ? err.message : String(err));
    }
  });

  el<HTMLButtonElement>("play-interp").addEventListener("click", async () => {
    if (selected.length < 2) {
      banner("pick two bookmarks first (click them in order)");
      return;
    }
    const steps = 10;
    const { frames: fetched } = await api.interpolate(
      selected[0].code,
      selected[1].code,
      steps,
      state.condition,
    );
    frames = fetched.map((f) => f.vertices);
    scrubber.max = String(frames.length - 1);
    scrubber.value = "0";
    viewer.showVertices(frames[0]);
  });
  scrubber.addEventListener("input", () => {
    const k = Number(scrubber.value);
    if (frames[k]) viewer.showVertices(frames[k]);
  });

  el<HTMLSpanElement>("summary").textContent =
    `${info.corpus_size} models, latent dim ${info.latent_dim}`;
  syncPadMarker();
  await decodeNow();
}

void boot();
