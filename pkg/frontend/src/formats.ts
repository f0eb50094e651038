// File-format parsing for the viewer: OBJ meshes, cage JSON, the baked
// weight payload (JSON header + little-endian float32 matrix) and deformed
// cage descriptions, all matching what the CLI writes.

export interface Mesh {
  vertices: Float64Array; // xyz interleaved
  dim: 2 | 3;
  faces: Uint32Array; // triangles
  count: number;
}

export interface CageData {
  dim: 2 | 3;
  vertices: Float64Array;
  facets: Uint32Array; // edge pairs (2D) or triangles (3D)
  facetArity: 2 | 3;
  count: number;
}

export interface BakedWeights {
  nPoints: number;
  K: number;
  matrix: Float64Array; // row-major nPoints x K
}

export class FormatError extends Error {}

export function parseObj(text: string): Mesh {
  const verts: number[] = [];
  const faces: number[] = [];
  let any3d = false;
  for (const raw of text.split("\n")) {
    const parts = raw.trim().split(/\s+/);
    if (parts[0] === "v") {
      if (parts.length < 4) throw new FormatError(`bad vertex line: ${raw}`);
      const x = Number(parts[1]), y = Number(parts[2]), z = Number(parts[3]);
      if (!isFinite(x) || !isFinite(y) || !isFinite(z)) {
        throw new FormatError(`non-numeric vertex: ${raw}`);
      }
      if (z !== 0) any3d = true;
      verts.push(x, y, z);
    } else if (parts[0] === "f") {
      if (parts.length !== 4) throw new FormatError("only triangle faces are supported");
      for (let i = 1; i <= 3; i++) {
        const id = parseInt(parts[i].split("/")[0], 10);
        if (!isFinite(id) || id < 1) throw new FormatError(`bad face index: ${raw}`);
        faces.push(id - 1);
      }
    }
  }
  const count = verts.length / 3;
  for (const f of faces) {
    if (f >= count) throw new FormatError("face index out of range");
  }
  return {
    vertices: Float64Array.from(verts),
    dim: any3d ? 3 : 2,
    faces: Uint32Array.from(faces),
    count,
  };
}

export function parseCage(json: unknown): CageData {
  const data = json as { d?: number; vertices?: number[][]; facets?: number[][] };
  if (!data || (data.d !== 2 && data.d !== 3) || !data.vertices || !data.facets) {
    throw new FormatError("cage JSON needs d, vertices, facets");
  }
  const dim = data.d as 2 | 3;
  const count = data.vertices.length;
  const vertices = new Float64Array(count * 3);
  data.vertices.forEach((v, i) => {
    if (v.length !== dim) throw new FormatError(`cage vertex ${i} has wrong dimension`);
    vertices[3 * i] = v[0];
    vertices[3 * i + 1] = v[1];
    vertices[3 * i + 2] = dim === 3 ? v[2] : 0;
  });
  const arity = dim as 2 | 3;
  const facets = new Uint32Array(data.facets.length * arity);
  data.facets.forEach((f, i) => {
    if (f.length !== arity) throw new FormatError(`cage facet ${i} has wrong arity`);
    f.forEach((id, j) => {
      if (id < 0 || id >= count) throw new FormatError("cage facet index out of range");
      facets[arity * i + j] = id;
    });
  });
  return { dim, vertices, facets, facetArity: arity, count };
}

export function parseBakedWeights(header: unknown, payload: ArrayBuffer): BakedWeights {
  const h = header as { format?: string; n_points?: number; K?: number; dtype?: string };
  if (!h || h.format !== "baryfield-baked-weights") {
    throw new FormatError("not a baked-weights header");
  }
  if (h.dtype !== "<f4") throw new FormatError(`unsupported dtype ${h.dtype}`);
  const n = h.n_points ?? 0;
  const K = h.K ?? 0;
  if (n < 1 || K < 1) throw new FormatError("empty weight matrix");
  if (payload.byteLength !== n * K * 4) {
    throw new FormatError(
      `payload holds ${payload.byteLength / 4} floats, header says ${n * K}`,
    );
  }
  const raw = new Float32Array(payload);
  const matrix = new Float64Array(n * K);
  for (let i = 0; i < raw.length; i++) matrix[i] = raw[i];
  return { nPoints: n, K, matrix };
}

// Deformed-cage JSON (global similarity + local vertices) -> composed positions.
export function composeDeformedCage(json: unknown, dim: 2 | 3): Float64Array {
  const d = json as {
    global_rotation?: number[];
    global_scale?: number;
    global_translation?: number[];
    local_vertices?: number[][];
  };
  if (!d || !d.local_vertices || d.global_scale === undefined) {
    throw new FormatError("deformed-cage JSON is incomplete");
  }
  const s = d.global_scale;
  const t = d.global_translation ?? new Array(dim).fill(0);
  const R = rotationMatrix(d.global_rotation ?? [], dim);
  const out = new Float64Array(d.local_vertices.length * 3);
  d.local_vertices.forEach((v, i) => {
    const x = v[0], y = v[1], z = dim === 3 ? v[2] : 0;
    out[3 * i] = s * (R[0] * x + R[1] * y + R[2] * z) + t[0];
    out[3 * i + 1] = s * (R[3] * x + R[4] * y + R[5] * z) + t[1];
    out[3 * i + 2] = dim === 3 ? s * (R[6] * x + R[7] * y + R[8] * z) + (t[2] ?? 0) : 0;
  });
  return out;
}

function rotationMatrix(logRot: number[], dim: 2 | 3): number[] {
  if (dim === 2) {
    const th = logRot[0] ?? 0;
    const c = Math.cos(th), s = Math.sin(th);
    return [c, -s, 0, s, c, 0, 0, 0, 1];
  }
  const [wx, wy, wz] = [logRot[0] ?? 0, logRot[1] ?? 0, logRot[2] ?? 0];
  const th = Math.hypot(wx, wy, wz);
  if (th < 1e-12) return [1, 0, 0, 0, 1, 0, 0, 0, 1];
  const [x, y, z] = [wx / th, wy / th, wz / th];
  const c = Math.cos(th), s = Math.sin(th), C = 1 - c;
  return [
    c + x * x * C, x * y * C - z * s, x * z * C + y * s,
    y * x * C + z * s, c + y * y * C, y * z * C - x * s,
    z * x * C - y * s, z * y * C + x * s, c + z * z * C,
  ];
}
