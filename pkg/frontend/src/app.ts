// Page wiring: file pickers, vertex dragging, keyframes and playback.

import { dragPlaneDelta, defaultViewport, pickCageVertex, render, Viewport } from "./render";
import {
  addKeyframe,
  applyDeformation,
  dragVertex,
  loadScene,
  playInbetween,
  resetCage,
  Scene,
} from "./scene";

interface PendingFiles {
  mesh?: string;
  cage?: unknown;
  weightsHeader?: unknown;
  weightsPayload?: ArrayBuffer;
}

const pending: PendingFiles = {};
let scene: Scene | null = null;
let viewport: Viewport | null = null;
let dragging: number | null = null;
let orbiting = false;
let lastMouse: [number, number] = [0, 0];

function status(msg: string, isError = false) {
  const el = document.getElementById("status")!;
  el.textContent = msg;
  el.style.color = isError ? "#b00020" : "#333";
}

function tryBuildScene() {
  if (!pending.mesh || !pending.cage || !pending.weightsHeader || !pending.weightsPayload) {
    return;
  }
  try {
    scene = loadScene(pending.mesh, pending.cage, pending.weightsHeader, pending.weightsPayload);
    const canvas = document.getElementById("view") as HTMLCanvasElement;
    viewport = defaultViewport(canvas.width, canvas.height);
    status(`loaded: ${scene.mesh.count} mesh vertices, cage K=${scene.cage.count}`);
    draw();
  } catch (err) {
    scene = null;
    status(`load error: ${(err as Error).message}`, true);
  }
}

function draw() {
  if (!scene || !viewport) return;
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  render(ctx, scene, viewport);
}

function hookFile(id: string, handler: (file: File) => Promise<void>) {
  const input = document.getElementById(id) as HTMLInputElement;
  input.addEventListener("change", async () => {
    const file = input.files?.[0];
    if (!file) return;
    try {
      await handler(file);
      tryBuildScene();
    } catch (err) {
      status(`${id}: ${(err as Error).message}`, true);
    }
  });
}

function wireUi() {
  hookFile("mesh-file", async (f) => {
    pending.mesh = await f.text();
  });
  hookFile("cage-file", async (f) => {
    pending.cage = JSON.parse(await f.text());
  });
  hookFile("weights-header-file", async (f) => {
    pending.weightsHeader = JSON.parse(await f.text());
  });
  hookFile("weights-bin-file", async (f) => {
    pending.weightsPayload = await f.arrayBuffer();
  });

  const canvas = document.getElementById("view") as HTMLCanvasElement;
  canvas.addEventListener("mousedown", (e) => {
    if (!scene || !viewport) return;
    const rect = canvas.getBoundingClientRect();
    const sx = e.clientX - rect.left;
    const sy = e.clientY - rect.top;
    dragging = pickCageVertex(scene, viewport, sx, sy);
    orbiting = dragging === null && scene.cage.dim === 3;
    lastMouse = [sx, sy];
  });
  canvas.addEventListener("mousemove", (e) => {
    if (!scene || !viewport) return;
    const rect = canvas.getBoundingClientRect();
    const sx = e.clientX - rect.left;
    const sy = e.clientY - rect.top;
    const dx = sx - lastMouse[0];
    const dy = sy - lastMouse[1];
    lastMouse = [sx, sy];
    if (dragging !== null) {
      const [wx, wy, wz] = dragPlaneDelta(scene, viewport, dx, dy);
      const k = dragging;
      dragVertex(scene, k, [
        scene.cageVertices[3 * k] + wx,
        scene.cageVertices[3 * k + 1] + wy,
        scene.cageVertices[3 * k + 2] + wz,
      ]);
      draw();
    } else if (orbiting) {
      viewport.camera.yaw += dx * 0.01;
      viewport.camera.pitch = Math.min(1.5, Math.max(-1.5, viewport.camera.pitch + dy * 0.01));
      draw();
    }
  });
  window.addEventListener("mouseup", () => {
    dragging = null;
    orbiting = false;
  });
  canvas.addEventListener("wheel", (e) => {
    if (!viewport) return;
    e.preventDefault();
    viewport.camera.zoom *= Math.exp(-e.deltaY * 0.001);
    draw();
  });
  canvas.addEventListener("dblclick", (e) => {
    if (!scene || !viewport) return;
    const rect = canvas.getBoundingClientRect();
    const hit = pickCageVertex(scene, viewport, e.clientX - rect.left, e.clientY - rect.top);
    viewport.heatmapVertex = hit === viewport.heatmapVertex ? null : hit;
    draw();
  });

  document.getElementById("reset")!.addEventListener("click", () => {
    if (!scene) return;
    resetCage(scene);
    draw();
  });
  document.getElementById("add-keyframe")!.addEventListener("click", () => {
    if (!scene) return;
    addKeyframe(scene);
    status(`${scene.keyframes.length} keyframes`);
  });
  const slider = document.getElementById("timeline") as HTMLInputElement;
  slider.addEventListener("input", () => {
    if (!scene) return;
    if (scene.keyframes.length < 2) {
      status("add at least two keyframes first", true);
      return;
    }
    playInbetween(scene, scene.keyframes, Number(slider.value));
    draw();
  });
  document.getElementById("clear-keyframes")!.addEventListener("click", () => {
    if (!scene) return;
    scene.keyframes = [];
    status("keyframes cleared");
  });
}

document.addEventListener("DOMContentLoaded", () => {
  wireUi();
  status("load a mesh OBJ, cage JSON and the baked weights (.json + .bin)");
});

// handy for console poking
(window as unknown as Record<string, unknown>).baryfieldViewer = {
  getScene: () => scene,
  applyDeformation,
};
