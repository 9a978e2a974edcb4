import { createHash } from 'node:crypto';
import { existsSync } from 'node:fs';
import { writeFile } from 'node:fs/promises';

export const IMAGE_DIM = 2048;
export const TEXT_DIM = 768;

export interface EmbeddingBackend {
  readonly name: string;
  readonly dim: number;
  embed(content: Buffer): Float32Array;
}

/**
 * Deterministic offline backend: expands sha256(content) in counter mode and
 * maps each 32-bit word to [-1, 1). Same bytes always produce the same
 * vector, so re-encoding-identical captions or files collide as required.
 * It is a stand-in for a real encoder when no pretrained weights are
 * available; vectors carry no semantics beyond content identity.
 */
export class HashEmbeddingBackend implements EmbeddingBackend {
  readonly name: string;
  readonly dim: number;

  constructor(dim: number, private readonly label: string) {
    this.dim = dim;
    this.name = `hash-${label}-${dim}`;
  }

  embed(content: Buffer): Float32Array {
    const seed = createHash('sha256').update(this.label).update(content).digest();
    const out = new Float32Array(this.dim);
    let filled = 0;
    for (let block = 0; filled < this.dim; block++) {
      const counter = Buffer.alloc(4);
      counter.writeUInt32LE(block);
      const bytes = createHash('sha256').update(seed).update(counter).digest();
      for (let off = 0; off + 4 <= bytes.length && filled < this.dim; off += 4) {
        out[filled++] = bytes.readUInt32LE(off) / 2 ** 31 - 1.0;
      }
    }
    return out;
  }
}

/**
 * Pretrained-model backend. Loading requires a local model directory; this
 * environment cannot download weights, so construction fails with an
 * actionable message unless the directory exists and a loader is wired in.
 */
export function pretrainedBackend(kind: 'image' | 'text', modelDir?: string): EmbeddingBackend {
  const expected = kind === 'image' ? 'a 2048-d image encoder' : 'a 768-d sentence encoder';
  if (!modelDir || !existsSync(modelDir)) {
    throw new Error(
      `cannot load ${expected}: model directory ${modelDir ?? '(unset)'} not found. ` +
        `Download the pretrained weights to a local directory and pass it via ` +
        `--model-dir, or use --backend hash for the deterministic offline backend.`,
    );
  }
  throw new Error(
    `model directory ${modelDir} found, but no runtime loader is bundled in this build; ` +
      `use --backend hash or add a loader for your serialized ${expected}.`,
  );
}

export function makeBackend(
  backend: string,
  kind: 'image' | 'text',
  modelDir?: string,
): EmbeddingBackend {
  const dim = kind === 'image' ? IMAGE_DIM : TEXT_DIM;
  if (backend === 'hash') return new HashEmbeddingBackend(dim, kind);
  if (backend === 'pretrained') return pretrainedBackend(kind, modelDir);
  throw new Error(`unknown embedding backend: ${backend}`);
}

/**
 * Write the engine's wire format: little-endian float32 row-major matrix in
 * <name>.bin plus a {post_ids, dim, modality} JSON sidecar in <name>.json.
 */
export async function writeEmbeddings(
  binPath: string,
  postIds: string[],
  rows: Float32Array[],
  dim: number,
  modality: 'image' | 'text',
): Promise<void> {
  const matrix = Buffer.alloc(postIds.length * dim * 4);
  rows.forEach((row, i) => {
    if (row.length !== dim) {
      throw new Error(`row ${i} has ${row.length} dims, expected ${dim}`);
    }
    for (let j = 0; j < dim; j++) {
      matrix.writeFloatLE(row[j], (i * dim + j) * 4);
    }
  });
  await writeFile(binPath, matrix);
  const sidecar = { post_ids: postIds, dim, modality };
  await writeFile(
    binPath.replace(/\.bin$/, '.json'),
    JSON.stringify(sidecar, Object.keys(sidecar).sort(), 2) + '\n',
  );
}
