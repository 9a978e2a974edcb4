import { FeatureRecord, RawPost } from './types.js';

const HASHTAG_RE = /#[\p{L}\p{N}_]+/gu;
const MENTION_RE = /@[\p{L}\p{N}_.]+/gu;
const EMOJI_RE = /\p{Extended_Pictographic}/gu;
const LETTER_RE = /\p{L}/gu;
const ASCII_LETTER_RE = /[A-Za-z]/;

function countMatches(text: string, re: RegExp): number {
  return (text.match(re) ?? []).length;
}

/**
 * Heuristic language flag: 1 when at least 80% of the caption's letters are
 * ASCII (or the caption has no letters at all). Stands in for a language-id
 * service so the engine can filter non-English captions.
 */
export function isEnglishLike(caption: string): number {
  const letters = caption.match(LETTER_RE) ?? [];
  if (letters.length === 0) return 1;
  const ascii = letters.filter(ch => ASCII_LETTER_RE.test(ch)).length;
  return ascii / letters.length >= 0.8 ? 1 : 0;
}

/**
 * Discoverability and text counters from a post's metadata and caption.
 *
 * Emojis are counted per Extended_Pictographic code point (a ZWJ family
 * sequence counts each member). Absent boolean fields default to 0.
 */
export function extractMetadataFeatures(raw: RawPost): FeatureRecord {
  const caption = raw.caption ?? '';
  const posted = new Date(raw.posted_at);
  if (Number.isNaN(posted.getTime())) {
    throw new Error(`post ${raw.post_id}: unparseable posted_at ${raw.posted_at}`);
  }
  return {
    n_hashtags: countMatches(caption, HASHTAG_RE),
    n_mentions: countMatches(caption, MENTION_RE),
    is_video: raw.is_video ? 1 : 0,
    is_sponsored: raw.is_sponsored ? 1 : 0,
    has_location: raw.has_location ? 1 : 0,
    hour_of_day: posted.getUTCHours(),
    day_of_week: posted.getUTCDay(),
    caption_len: [...caption].length,
    n_emojis: countMatches(caption, EMOJI_RE),
    is_english: isEnglishLike(caption),
  };
}
