/**
 * Mask editing model: an ordered list of brush strokes rasterized into a
 * strictly binary mask with the exact dimensions of the base image.
 *
 * Stamps are hard-edged: a pixel is painted iff its center lies within the
 * brush radius of the stroke polyline. Erase strokes clear instead of set.
 */

export interface Point {
  x: number;
  y: number;
}

export interface Stroke {
  radius: number;
  erase: boolean;
  points: Point[];
}

export interface MaskCanvasState {
  width: number;
  height: number;
  strokes: Stroke[];
}

export function emptyState(width: number, height: number): MaskCanvasState {
  if (width < 1 || height < 1) {
    throw new Error(`mask canvas needs positive dims, got ${width}x${height}`);
  }
  return { width, height, strokes: [] };
}

export function startStroke(
  state: MaskCanvasState,
  at: Point,
  radius: number,
  erase: boolean
): void {
  state.strokes.push({ radius, erase, points: [at] });
}

export function extendStroke(state: MaskCanvasState, to: Point): void {
  const stroke = state.strokes[state.strokes.length - 1];
  if (!stroke) throw new Error("no active stroke");
  stroke.points.push(to);
}

export function clearStrokes(state: MaskCanvasState): void {
  state.strokes = [];
}

export function fillAll(state: MaskCanvasState): void {
  // a single stroke whose radius covers the whole canvas
  const r = Math.hypot(state.width, state.height);
  state.strokes.push({
    radius: r,
    erase: false,
    points: [{ x: state.width / 2, y: state.height / 2 }],
  });
}

function distToSegmentSq(px: number, py: number, a: Point, b: Point): number {
  const dx = b.x - a.x;
  const dy = b.y - a.y;
  const lenSq = dx * dx + dy * dy;
  let t = 0;
  if (lenSq > 0) {
    t = ((px - a.x) * dx + (py - a.y) * dy) / lenSq;
    t = Math.max(0, Math.min(1, t));
  }
  const cx = a.x + t * dx;
  const cy = a.y + t * dy;
  return (px - cx) * (px - cx) + (py - cy) * (py - cy);
}

function stampSegment(
  mask: Uint8Array,
  width: number,
  height: number,
  a: Point,
  b: Point,
  radius: number,
  value: 0 | 1
): void {
  const rSq = radius * radius;
  const x0 = Math.max(0, Math.floor(Math.min(a.x, b.x) - radius - 1));
  const x1 = Math.min(width - 1, Math.ceil(Math.max(a.x, b.x) + radius + 1));
  const y0 = Math.max(0, Math.floor(Math.min(a.y, b.y) - radius - 1));
  const y1 = Math.min(height - 1, Math.ceil(Math.max(a.y, b.y) + radius + 1));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      // pixel centers sit at (x + 0.5, y + 0.5)
      if (distToSegmentSq(x + 0.5, y + 0.5, a, b) <= rSq) {
        mask[y * width + x] = value;
      }
    }
  }
}

/** Rasterize all strokes, in order, into a {0,1} mask raster. */
export function rasterize(state: MaskCanvasState): Uint8Array {
  const mask = new Uint8Array(state.width * state.height);
  for (const stroke of state.strokes) {
    const value = stroke.erase ? 0 : 1;
    const pts = stroke.points;
    if (pts.length === 1) {
      stampSegment(mask, state.width, state.height, pts[0], pts[0], stroke.radius, value);
    }
    for (let i = 1; i < pts.length; i++) {
      stampSegment(mask, state.width, state.height, pts[i - 1], pts[i], stroke.radius, value);
    }
  }
  return mask;
}

/** Count of masked pixels (useful for enabling/disabling the train button). */
export function maskedCount(mask: Uint8Array): number {
  let n = 0;
  for (const v of mask) n += v;
  return n;
}
