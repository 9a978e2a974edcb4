import { readFile } from 'node:fs/promises';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { mkdtemp } from 'node:fs/promises';

import { describe, expect, it } from 'vitest';

import {
  HashEmbeddingBackend,
  IMAGE_DIM,
  TEXT_DIM,
  makeBackend,
  writeEmbeddings,
} from '../src/embeddings.js';

describe('HashEmbeddingBackend', () => {
  it('produces the declared dimensions', () => {
    expect(makeBackend('hash', 'image').embed(Buffer.from('x')).length).toBe(2048);
    expect(makeBackend('hash', 'text').embed(Buffer.from('x')).length).toBe(768);
  });

  it('identical content embeds identically', () => {
    const backend = new HashEmbeddingBackend(TEXT_DIM, 'text');
    const a = backend.embed(Buffer.from('same caption'));
    const b = backend.embed(Buffer.from('same caption'));
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  it('different content embeds differently', () => {
    const backend = new HashEmbeddingBackend(TEXT_DIM, 'text');
    const a = backend.embed(Buffer.from('caption one'));
    const b = backend.embed(Buffer.from('caption two'));
    expect(Array.from(a)).not.toEqual(Array.from(b));
  });

  it('values stay within [-1, 1)', () => {
    const backend = new HashEmbeddingBackend(IMAGE_DIM, 'image');
    const v = backend.embed(Buffer.from([1, 2, 3]));
    for (const x of v) {
      expect(x).toBeGreaterThanOrEqual(-1);
      expect(x).toBeLessThan(1);
    }
  });

  it('image and text streams differ for identical bytes', () => {
    const img = new HashEmbeddingBackend(768, 'image');
    const txt = new HashEmbeddingBackend(768, 'text');
    const content = Buffer.from('shared');
    expect(Array.from(img.embed(content))).not.toEqual(Array.from(txt.embed(content)));
  });
});

describe('pretrained backend stub', () => {
  it('fails fatally with an actionable message when no model dir exists', () => {
    expect(() => makeBackend('pretrained', 'image', '/nonexistent/model')).toThrow(
      /--backend hash|model directory/,
    );
    expect(() => makeBackend('pretrained', 'text')).toThrow(/Download the pretrained weights/);
  });

  it('rejects unknown backends', () => {
    expect(() => makeBackend('quantum', 'image')).toThrow(/unknown embedding backend/);
  });
});

describe('writeEmbeddings', () => {
  it('writes little-endian float32 with a {post_ids, dim, modality} sidecar', async () => {
    const dir = await mkdtemp(join(tmpdir(), 'emb-'));
    const rows = [new Float32Array([1.5, -0.25, 0]), new Float32Array([0.5, 2, -1])];
    await writeEmbeddings(join(dir, 'vec.bin'), ['a', 'b'], rows, 3, 'text');
    const bin = await readFile(join(dir, 'vec.bin'));
    expect(bin.length).toBe(2 * 3 * 4);
    expect(bin.readFloatLE(0)).toBe(1.5);
    expect(bin.readFloatLE(4)).toBe(-0.25);
    expect(bin.readFloatLE(12)).toBe(0.5);
    const sidecar = JSON.parse(await readFile(join(dir, 'vec.json'), 'utf-8'));
    expect(sidecar).toEqual({ post_ids: ['a', 'b'], dim: 3, modality: 'text' });
  });

  it('rejects rows with the wrong width', async () => {
    const dir = await mkdtemp(join(tmpdir(), 'emb-'));
    await expect(
      writeEmbeddings(join(dir, 'vec.bin'), ['a'], [new Float32Array(2)], 3, 'image'),
    ).rejects.toThrow(/expected 3/);
  });
});
