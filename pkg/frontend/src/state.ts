/** Pure state for the two-level exploration workflow.
 *
 * The user browses one dimension pair on the pad, pins a choice, and
 * the active pair advances to the next unpinned dimensions. Pinned
 * dimensions are never part of the active pair; their values ride along
 * in every decoded code.
 */

export interface GridSettings {
  range: [number, number];
  resolution: number;
}

export interface ExplorerState {
  code: number[];
  activePair: [number, number];
  pinned: Record<number, number>;
  grid: GridSettings;
  condition: string[] | null;
}

export const PAD_RANGE: [number, number] = [-2, 2];

export function initialState(latentDim: number): ExplorerState {
  if (latentDim < 1) throw new Error("latent dimension must be positive");
  return {
    code: new Array(latentDim).fill(0),
    activePair: latentDim >= 2 ? [0, 1] : [0, 0],
    pinned: {},
    grid: { range: [...PAD_RANGE] as [number, number], resolution: 5 },
    condition: null,
  };
}

function assertDim(state: ExplorerState, dim: number): void {
  if (dim < 0 || dim >= state.code.length) {
    throw new Error(`dimension ${dim} outside 0..${state.code.length - 1}`);
  }
}

export function nextFreePair(
  state: ExplorerState,
  after: [number, number],
): [number, number] {
  const free: number[] = [];
  for (let d = 0; d < state.code.length; d++) {
    if (!(d in state.pinned) && d !== after[0] && d !== after[1]) free.push(d);
  }
  if (free.length >= 2) return [free[0], free[1]];
  return after; // nothing left to advance to: keep browsing the same pair
}

export function setPadPosition(
  state: ExplorerState,
  x: number,
  y: number,
): ExplorerState {
  const [d1, d2] = state.activePair;
  const code = state.code.slice();
  code[d1] = x;
  code[d2] = y;
  return { ...state, code };
}

export function setSlider(
  state: ExplorerState,
  dim: number,
  value: number,
): ExplorerState {
  assertDim(state, dim);
  if (dim in state.pinned) {
    const pinned = { ...state.pinned, [dim]: value };
    const code = state.code.slice();
    code[dim] = value;
    return { ...state, pinned, code };
  }
  const code = state.code.slice();
  code[dim] = value;
  return { ...state, code };
}

/** Pin the active pair at its current values and advance to the next
 * unpinned pair (the second browsing level). */
export function pinActivePair(state: ExplorerState): ExplorerState {
  const [d1, d2] = state.activePair;
  const pinned = {
    ...state.pinned,
    [d1]: state.code[d1],
    [d2]: state.code[d2],
  };
  const next = nextFreePair({ ...state, pinned }, state.activePair);
  return { ...state, pinned, activePair: next };
}

export function unpinAll(state: ExplorerState): ExplorerState {
  const dim = state.code.length;
  return { ...state, pinned: {}, activePair: dim >= 2 ? [0, 1] : [0, 0] };
}

/** Lattice value of grid cell (i, j) along one axis. */
export function gridValue(settings: GridSettings, index: number): number {
  const [lo, hi] = settings.range;
  return lo + ((hi - lo) * index) / (settings.resolution - 1);
}

/** Code decoded for grid cell (i, j) under the current state. */
export function gridCellCode(state: ExplorerState, i: number, j: number): number[] {
  const code = state.code.slice();
  code[state.activePair[0]] = gridValue(state.grid, i);
  code[state.activePair[1]] = gridValue(state.grid, j);
  return code;
}

/** Clicking grid cell (i, j): adopt its values, pin them, and switch the
 * pad to the next dimension pair. */
export function applyGridPick(
  state: ExplorerState,
  i: number,
  j: number,
): ExplorerState {
  const picked = setPadPosition(
    state,
    gridValue(state.grid, i),
    gridValue(state.grid, j),
  );
  return pinActivePair(picked);
}

export function setActivePair(
  state: ExplorerState,
  d1: number,
  d2: number,
): ExplorerState {
  assertDim(state, d1);
  assertDim(state, d2);
  if (d1 === d2) throw new Error("active pair needs two distinct dimensions");
  if (d1 in state.pinned || d2 in state.pinned) {
    throw new Error("pinned dimensions cannot join the active pair");
  }
  return { ...state, activePair: [d1, d2] };
}

export function formatCode(code: number[]): string {
  return code.map((v) => String(v)).join(" ");
}

export function parseCode(text: string, latentDim: number): number[] {
  const parts = text.trim().split(/[\s,]+/).filter((p) => p.length > 0);
  if (parts.length !== latentDim) {
    throw new Error(`expected ${latentDim} values, found ${parts.length}`);
  }
  const code = parts.map(Number);
  if (code.some((v) => !Number.isFinite(v))) {
    throw new Error("code contains non-numeric values");
  }
  return code;
}
