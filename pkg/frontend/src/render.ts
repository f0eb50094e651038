// Canvas rendering for 2D and 3D scenes. 3D uses a fixed-pipeline
// orthographic projection with a user-orbitable camera, painter-sorted
// triangles and screen-space picking of cage vertices; no GPU libraries, so
// the page keeps working straight off the file system.

import { Scene, weightColumn } from "./scene";

export interface Camera {
  yaw: number;
  pitch: number;
  zoom: number;
  panX: number;
  panY: number;
}

export interface Viewport {
  width: number;
  height: number;
  camera: Camera;
  heatmapVertex: number | null;
}

export function defaultViewport(width: number, height: number): Viewport {
  return {
    width,
    height,
    camera: { yaw: -0.5, pitch: 0.4, zoom: 1, panX: 0, panY: 0 },
    heatmapVertex: null,
  };
}

function bounds(scene: Scene) {
  const v = scene.restCage;
  let min = [Infinity, Infinity, Infinity];
  let max = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < v.length / 3; i++) {
    for (let a = 0; a < 3; a++) {
      min[a] = Math.min(min[a], v[3 * i + a]);
      max[a] = Math.max(max[a], v[3 * i + a]);
    }
  }
  return { min, max };
}

// world -> screen; orthographic with yaw/pitch orbit for 3D scenes
export function project(scene: Scene, vp: Viewport, x: number, y: number, z: number): [number, number, number] {
  const { min, max } = bounds(scene);
  const cx = (min[0] + max[0]) / 2;
  const cy = (min[1] + max[1]) / 2;
  const cz = (min[2] + max[2]) / 2;
  const extent = Math.max(max[0] - min[0], max[1] - min[1], max[2] - min[2], 1e-9);
  const scale = 0.7 * Math.min(vp.width, vp.height) / extent * vp.camera.zoom;
  let dx = x - cx, dy = y - cy, dz = z - cz;
  if (scene.mesh.dim === 3 || scene.cage.dim === 3) {
    const cyaw = Math.cos(vp.camera.yaw), syaw = Math.sin(vp.camera.yaw);
    const cp = Math.cos(vp.camera.pitch), sp = Math.sin(vp.camera.pitch);
    const rx = cyaw * dx + syaw * dz;
    const rz0 = -syaw * dx + cyaw * dz;
    const ry = cp * dy - sp * rz0;
    const rz = sp * dy + cp * rz0;
    dx = rx; dy = ry; dz = rz;
  }
  return [
    vp.width / 2 + scale * dx + vp.camera.panX,
    vp.height / 2 - scale * dy + vp.camera.panY,
    dz,
  ];
}

export function pickCageVertex(scene: Scene, vp: Viewport, sx: number, sy: number, radius = 10): number | null {
  let best: number | null = null;
  let bestDist = radius * radius;
  for (let k = 0; k < scene.cage.count; k++) {
    const [px, py] = project(
      scene, vp,
      scene.cageVertices[3 * k], scene.cageVertices[3 * k + 1], scene.cageVertices[3 * k + 2],
    );
    const d2 = (px - sx) ** 2 + (py - sy) ** 2;
    if (d2 < bestDist) {
      bestDist = d2;
      best = k;
    }
  }
  return best;
}

// screen delta -> world delta in the camera plane (used while dragging)
export function dragPlaneDelta(scene: Scene, vp: Viewport, dxPix: number, dyPix: number): [number, number, number] {
  const { min, max } = bounds(scene);
  const extent = Math.max(max[0] - min[0], max[1] - min[1], max[2] - min[2], 1e-9);
  const scale = 0.7 * Math.min(vp.width, vp.height) / extent * vp.camera.zoom;
  let wx = dxPix / scale, wy = -dyPix / scale, wz = 0;
  if (scene.mesh.dim === 3 || scene.cage.dim === 3) {
    const cyaw = Math.cos(vp.camera.yaw), syaw = Math.sin(vp.camera.yaw);
    const cp = Math.cos(vp.camera.pitch), sp = Math.sin(vp.camera.pitch);
    // inverse of the orbit rotation applied in project()
    const ry = cp * wy;
    const rz0 = -sp * wy;
    const rx = wx;
    wx = cyaw * rx - syaw * rz0;
    wz = syaw * rx + cyaw * rz0;
    wy = ry;
  }
  return [wx, wy, wz];
}

function heatColor(t: number): string {
  const v = Math.min(1, Math.max(0, t));
  const r = Math.round(255 * Math.min(1, 2 * v));
  const b = Math.round(255 * Math.min(1, 2 * (1 - v)));
  const g = Math.round(80 * (1 - Math.abs(2 * v - 1)));
  return `rgb(${r},${g},${b})`;
}

export function render(ctx: CanvasRenderingContext2D, scene: Scene, vp: Viewport): void {
  ctx.clearRect(0, 0, vp.width, vp.height);
  const heat = vp.heatmapVertex !== null ? weightColumn(scene, vp.heatmapVertex) : null;

  // mesh triangles, painter-sorted by mean depth for 3D
  const tris: { ids: [number, number, number]; depth: number }[] = [];
  const faces = scene.mesh.faces;
  for (let f = 0; f < faces.length / 3; f++) {
    const ids: [number, number, number] = [faces[3 * f], faces[3 * f + 1], faces[3 * f + 2]];
    let depth = 0;
    for (const id of ids) {
      depth += project(scene, vp,
        scene.deformed[3 * id], scene.deformed[3 * id + 1], scene.deformed[3 * id + 2])[2];
    }
    tris.push({ ids, depth: depth / 3 });
  }
  tris.sort((a, b) => a.depth - b.depth);
  for (const { ids } of tris) {
    ctx.beginPath();
    const pts = ids.map((id) => project(
      scene, vp,
      scene.deformed[3 * id], scene.deformed[3 * id + 1], scene.deformed[3 * id + 2]));
    ctx.moveTo(pts[0][0], pts[0][1]);
    ctx.lineTo(pts[1][0], pts[1][1]);
    ctx.lineTo(pts[2][0], pts[2][1]);
    ctx.closePath();
    if (heat) {
      const t = (heat[ids[0]] + heat[ids[1]] + heat[ids[2]]) / 3;
      ctx.fillStyle = heatColor(t);
      ctx.fill();
    } else {
      ctx.fillStyle = "rgba(120, 160, 220, 0.35)";
      ctx.fill();
    }
    ctx.strokeStyle = "rgba(40, 70, 110, 0.6)";
    ctx.lineWidth = 0.5;
    ctx.stroke();
  }

  // cage edges/facets
  ctx.strokeStyle = "#c75050";
  ctx.lineWidth = 1.5;
  const arity = scene.cage.facetArity;
  const facets = scene.cage.facets;
  for (let f = 0; f < facets.length / arity; f++) {
    ctx.beginPath();
    for (let j = 0; j <= arity; j++) {
      const id = facets[arity * f + (j % arity)];
      const [px, py] = project(scene, vp,
        scene.cageVertices[3 * id], scene.cageVertices[3 * id + 1], scene.cageVertices[3 * id + 2]);
      if (j === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    }
    ctx.stroke();
  }

  // cage vertices as draggable handles
  for (let k = 0; k < scene.cage.count; k++) {
    const [px, py] = project(scene, vp,
      scene.cageVertices[3 * k], scene.cageVertices[3 * k + 1], scene.cageVertices[3 * k + 2]);
    ctx.beginPath();
    ctx.arc(px, py, 5, 0, 2 * Math.PI);
    ctx.fillStyle = vp.heatmapVertex === k ? "#ffd24d" : "#d43c3c";
    ctx.fill();
    ctx.strokeStyle = "#4a0f0f";
    ctx.stroke();
  }
}
