import { writeFile } from 'node:fs/promises';

import { Diagnostic, FeatureRecord, RawPost } from './types.js';

export const REQUIRED_COLUMNS = [
  'post_id',
  'influencer_id',
  'category',
  'followers',
  'likes',
  'comments',
  'posted_at',
] as const;

function csvEscape(value: string): string {
  if (/[",\n]/.test(value)) {
    return '"' + value.replace(/"/g, '""') + '"';
  }
  return value;
}

function formatNumber(value: number): string {
  if (!Number.isFinite(value)) {
    throw new Error(`non-finite feature value: ${value}`);
  }
  return String(value);
}

/**
 * Assemble the engine's posts.csv: required identity/engagement columns
 * first, then every feature column in sorted order. A post missing a
 * feature (e.g. undecodable image) gets an empty cell, which the engine
 * treats as missing and imputes per slice.
 */
export async function writePostsCsv(
  path: string,
  posts: RawPost[],
  features: Map<string, FeatureRecord>,
): Promise<string[]> {
  const featureNames = new Set<string>();
  for (const record of features.values()) {
    for (const name of Object.keys(record)) featureNames.add(name);
  }
  const sortedFeatures = [...featureNames].sort();
  const header = [...REQUIRED_COLUMNS, ...sortedFeatures];
  const lines = [header.join(',')];
  for (const post of posts) {
    const record = features.get(post.post_id) ?? {};
    const cells = [
      post.post_id,
      post.influencer_id,
      post.category,
      String(post.followers),
      String(post.likes),
      String(post.comments),
      post.posted_at,
    ].map(csvEscape);
    for (const name of sortedFeatures) {
      const value = record[name];
      cells.push(value === undefined ? '' : formatNumber(value));
    }
    lines.push(cells.join(','));
  }
  await writeFile(path, lines.join('\n') + '\n', 'utf-8');
  return sortedFeatures;
}

export async function writeDiagnostics(path: string, diagnostics: Diagnostic[]): Promise<void> {
  const lines = diagnostics.map(d => JSON.stringify(d, Object.keys(d).sort()));
  await writeFile(path, lines.length ? lines.join('\n') + '\n' : '', 'utf-8');
}
