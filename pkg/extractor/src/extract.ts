import { readFile } from 'node:fs/promises';
import { join } from 'node:path';

import { colorFeatures, decodeImage } from './color.js';
import {
  IMAGE_DIM,
  TEXT_DIM,
  makeBackend,
  writeEmbeddings,
} from './embeddings.js';
import { extractMetadataFeatures } from './metadata.js';
import { Diagnostic, FeatureRecord, RawPost } from './types.js';
import { writeDiagnostics, writePostsCsv } from './writer.js';

export interface ExtractOptions {
  imagesDir: string;
  captionsFile: string;
  outDir: string;
  backend?: string;
  modelDir?: string;
}

export interface ExtractResult {
  posts: number;
  features: string[];
  diagnostics: Diagnostic[];
}

export async function readCaptionsFile(path: string): Promise<RawPost[]> {
  const text = await readFile(path, 'utf-8');
  const posts: RawPost[] = [];
  const seen = new Set<string>();
  text.split('\n').forEach((line, i) => {
    if (!line.trim()) return;
    let parsed: RawPost;
    try {
      parsed = JSON.parse(line);
    } catch {
      throw new Error(`captions file line ${i + 1}: invalid JSON`);
    }
    if (!parsed.post_id) throw new Error(`captions file line ${i + 1}: missing post_id`);
    if (seen.has(parsed.post_id)) {
      throw new Error(`captions file line ${i + 1}: duplicate post_id ${parsed.post_id}`);
    }
    seen.add(parsed.post_id);
    posts.push(parsed);
  });
  if (posts.length === 0) throw new Error('captions file contains no posts');
  return posts;
}

/**
 * Full adapter pass: metadata + color features into posts.csv, plus image
 * (n x 2048) and text (n x 768) embedding files in the engine's wire
 * format. Undecodable images produce a diagnostic and leave that post's
 * color features missing; embeddings hash the raw bytes regardless, so the
 * matrices always cover every post in input order.
 */
export async function runExtract(options: ExtractOptions): Promise<ExtractResult> {
  const backendKind = options.backend ?? 'hash';
  const imageBackend = makeBackend(backendKind, 'image', options.modelDir);
  const textBackend = makeBackend(backendKind, 'text', options.modelDir);

  const posts = await readCaptionsFile(options.captionsFile);
  const diagnostics: Diagnostic[] = [];
  const features = new Map<string, FeatureRecord>();
  const imageRows: Float32Array[] = [];
  const textRows: Float32Array[] = [];

  for (const post of posts) {
    const record: FeatureRecord = extractMetadataFeatures(post);
    const imagePath = join(options.imagesDir, post.image);
    let imageBytes: Buffer;
    try {
      imageBytes = await readFile(imagePath);
    } catch {
      diagnostics.push({
        post_id: post.post_id,
        stage: 'image',
        reason: `image file not found: ${post.image}`,
      });
      imageBytes = Buffer.from(post.post_id, 'utf-8');
      features.set(post.post_id, record);
      imageRows.push(imageBackend.embed(imageBytes));
      textRows.push(textBackend.embed(Buffer.from(post.caption ?? '', 'utf-8')));
      continue;
    }
    try {
      const image = decodeImage(imageBytes);
      Object.assign(record, colorFeatures(image));
    } catch (err) {
      diagnostics.push({
        post_id: post.post_id,
        stage: 'image',
        reason: `undecodable image: ${(err as Error).message}`,
      });
    }
    features.set(post.post_id, record);
    imageRows.push(imageBackend.embed(imageBytes));
    textRows.push(textBackend.embed(Buffer.from(post.caption ?? '', 'utf-8')));
  }

  const postIds = posts.map(p => p.post_id);
  const featureNames = await writePostsCsv(join(options.outDir, 'posts.csv'), posts, features);
  await writeEmbeddings(join(options.outDir, 'image.bin'), postIds, imageRows, IMAGE_DIM, 'image');
  await writeEmbeddings(join(options.outDir, 'text.bin'), postIds, textRows, TEXT_DIM, 'text');
  await writeDiagnostics(join(options.outDir, 'extract_diagnostics.jsonl'), diagnostics);
  return { posts: posts.length, features: featureNames, diagnostics };
}
