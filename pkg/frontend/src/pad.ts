/** 2-D pad over the active dimension pair: pointer position maps to
 * latent values in PAD_RANGE and drives live decoding. */

import { PAD_RANGE } from "./state.js";

export class Pad {
  private readonly ctx: CanvasRenderingContext2D;
  private marker: [number, number] = [0, 0];
  private dragging = false;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly onInput: (x: number, y: number) => void,
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.ctx = ctx;
    canvas.addEventListener("pointerdown", (e) => {
      this.dragging = true;
      canvas.setPointerCapture(e.pointerId);
      this.emit(e);
    });
    canvas.addEventListener("pointermove", (e) => {
      if (this.dragging) this.emit(e);
    });
    canvas.addEventListener("pointerup", () => {
      this.dragging = false;
    });
    this.draw();
  }

  private emit(e: PointerEvent): void {
    const rect = this.canvas.getBoundingClientRect();
    const [lo, hi] = PAD_RANGE;
    const fx = Math.min(Math.max((e.clientX - rect.left) / rect.width, 0), 1);
    const fy = Math.min(Math.max((e.clientY - rect.top) / rect.height, 0), 1);
    const x = lo + fx * (hi - lo);
    const y = hi - fy * (hi - lo); // canvas y grows downward
    this.setMarker(x, y);
    this.onInput(x, y);
  }

  setMarker(x: number, y: number): void {
    this.marker = [x, y];
    this.draw();
  }

  private draw(): void {
    const { width, height } = this.canvas;
    const [lo, hi] = PAD_RANGE;
    const c = this.ctx;
    c.fillStyle = "#161b22";
    c.fillRect(0, 0, width, height);
    c.strokeStyle = "#2e3a48";
    c.lineWidth = 1;
    for (let k = 0; k <= 4; k++) {
      const t = (k / 4) * width;
      c.beginPath();
      c.moveTo(t, 0);
      c.lineTo(t, height);
      c.moveTo(0, t);
      c.lineTo(width, t);
      c.stroke();
    }
    const fx = ((this.marker[0] - lo) / (hi - lo)) * width;
    const fy = (1 - (this.marker[1] - lo) / (hi - lo)) * height;
    c.fillStyle = "#58a6ff";
    c.beginPath();
    c.arc(fx, fy, 6, 0, 2 * Math.PI);
    c.fill();
  }
}
