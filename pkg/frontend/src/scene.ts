// Scene state and the deformation math: deformed mesh positions are always
// W @ cageVertices, recomputed on every cage edit.

import {
  BakedWeights,
  CageData,
  FormatError,
  Mesh,
  parseBakedWeights,
  parseCage,
  parseObj,
} from "./formats";

export interface Keyframe {
  cageVertices: Float64Array; // xyz interleaved snapshot
}

export interface Scene {
  mesh: Mesh;
  cage: CageData;
  weights: BakedWeights;
  restCage: Float64Array; // cage vertices at load time
  cageVertices: Float64Array; // current (possibly dragged) cage vertices
  deformed: Float64Array; // W @ cageVertices, xyz interleaved
  keyframes: Keyframe[];
}

export function loadScene(
  meshText: string,
  cageJson: unknown,
  weightsHeader: unknown,
  weightsPayload: ArrayBuffer,
): Scene {
  const mesh = parseObj(meshText);
  const cage = parseCage(cageJson);
  const weights = parseBakedWeights(weightsHeader, weightsPayload);
  if (weights.nPoints !== mesh.count) {
    throw new FormatError(
      `weights have ${weights.nPoints} rows but the mesh has ${mesh.count} vertices`,
    );
  }
  if (weights.K !== cage.count) {
    throw new FormatError(
      `weights have ${weights.K} columns but the cage has ${cage.count} vertices`,
    );
  }
  // each row must be a valid averaging rule (float32 payload tolerance)
  for (let i = 0; i < weights.nPoints; i++) {
    let sum = 0;
    for (let k = 0; k < weights.K; k++) sum += weights.matrix[i * weights.K + k];
    if (Math.abs(sum - 1) > 1e-4) {
      throw new FormatError(`weight row ${i} sums to ${sum}, expected 1`);
    }
  }
  const scene: Scene = {
    mesh,
    cage,
    weights,
    restCage: cage.vertices.slice(),
    cageVertices: cage.vertices.slice(),
    deformed: new Float64Array(mesh.count * 3),
    keyframes: [],
  };
  applyDeformation(scene);
  return scene;
}

// deformed[i] = sum_k W[i,k] * cageVertices[k]; flat loops keep a 1e4 x 128
// update well inside one frame.
export function applyDeformation(scene: Scene): Float64Array {
  const { weights, cageVertices, deformed } = scene;
  const K = weights.K;
  const W = weights.matrix;
  for (let i = 0; i < weights.nPoints; i++) {
    let x = 0, y = 0, z = 0;
    const row = i * K;
    for (let k = 0; k < K; k++) {
      const w = W[row + k];
      x += w * cageVertices[3 * k];
      y += w * cageVertices[3 * k + 1];
      z += w * cageVertices[3 * k + 2];
    }
    deformed[3 * i] = x;
    deformed[3 * i + 1] = y;
    deformed[3 * i + 2] = z;
  }
  return deformed;
}

export function dragVertex(
  scene: Scene,
  vertexId: number,
  position: ArrayLike<number>,
): Float64Array {
  if (vertexId < 0 || vertexId >= scene.cage.count) {
    throw new FormatError(`cage vertex ${vertexId} out of range`);
  }
  scene.cageVertices[3 * vertexId] = position[0];
  scene.cageVertices[3 * vertexId + 1] = position[1];
  scene.cageVertices[3 * vertexId + 2] = position.length > 2 ? position[2] : 0;
  return applyDeformation(scene);
}

export function setCageVertices(scene: Scene, vertices: Float64Array): Float64Array {
  if (vertices.length !== scene.cageVertices.length) {
    throw new FormatError("cage vertex buffer size mismatch");
  }
  scene.cageVertices.set(vertices);
  return applyDeformation(scene);
}

export function resetCage(scene: Scene): Float64Array {
  return setCageVertices(scene, scene.restCage);
}

export function addKeyframe(scene: Scene): Keyframe {
  const kf = { cageVertices: scene.cageVertices.slice() };
  scene.keyframes.push(kf);
  return kf;
}

// Linear inbetweening across the keyframe list at parameter t in [0, 1]
// (clamped), then the usual weight application.
export function playInbetween(scene: Scene, keyframes: Keyframe[], t: number): Float64Array {
  if (keyframes.length < 2) {
    throw new FormatError("inbetweening needs at least two keyframes");
  }
  const clamped = Math.min(1, Math.max(0, t));
  const span = keyframes.length - 1;
  const pos = clamped * span;
  const lo = Math.min(Math.floor(pos), span - 1);
  const frac = pos - lo;
  const a = keyframes[lo].cageVertices;
  const b = keyframes[lo + 1].cageVertices;
  const mixed = new Float64Array(a.length);
  for (let i = 0; i < a.length; i++) mixed[i] = (1 - frac) * a[i] + frac * b[i];
  return setCageVertices(scene, mixed);
}

// Column of the weight matrix, for heatmap rendering.
export function weightColumn(scene: Scene, vertexId: number): Float64Array {
  const { nPoints, K, matrix } = scene.weights;
  const out = new Float64Array(nPoints);
  for (let i = 0; i < nPoints; i++) out[i] = matrix[i * K + vertexId];
  return out;
}
