import jpeg from 'jpeg-js';
import { PNG } from 'pngjs';

import { FeatureRecord } from './types.js';

export interface DecodedImage {
  width: number;
  height: number;
  /** RGBA, 8 bits per channel */
  data: Uint8Array;
}

const PNG_MAGIC = Buffer.from([0x89, 0x50, 0x4e, 0x47]);
const JPEG_MAGIC = Buffer.from([0xff, 0xd8]);

/** Decode a PNG or JPEG buffer into RGBA pixels. */
export function decodeImage(buffer: Buffer): DecodedImage {
  if (buffer.subarray(0, 4).equals(PNG_MAGIC)) {
    const png = PNG.sync.read(buffer);
    return { width: png.width, height: png.height, data: png.data };
  }
  if (buffer.subarray(0, 2).equals(JPEG_MAGIC)) {
    const img = jpeg.decode(buffer, { useTArray: true, maxMemoryUsageInMB: 512 });
    return { width: img.width, height: img.height, data: img.data };
  }
  throw new Error('unsupported image format (expected PNG or JPEG)');
}

/**
 * Channel shares, HSV statistics, and affect scores for one image.
 *
 * - red/green/blue shares divide each channel sum by the total (an all-black
 *   image gets equal shares), so they always sum to 1.
 * - luminance and saturation are the mean HSV V and S over pixels.
 * - warm_share counts pixels with hue in [0, 90) or [330, 360), cold_share
 *   the rest; achromatic pixels (S = 0) count to neither.
 * - pleasure/arousal/dominance use the Valdez-Mehrabian linear model on
 *   mean brightness and saturation:
 *       pleasure  =  0.69 V + 0.22 S
 *       arousal   = -0.31 V + 0.60 S
 *       dominance = -0.76 V + 0.32 S
 *   (a grayscale image has S = 0, so both reduce to their brightness terms).
 */
export function colorFeatures(image: DecodedImage): FeatureRecord {
  const { data } = image;
  const pixels = Math.floor(data.length / 4);
  if (pixels === 0) throw new Error('empty image');

  let sumR = 0;
  let sumG = 0;
  let sumB = 0;
  let sumV = 0;
  let sumS = 0;
  let warm = 0;
  let cold = 0;
  for (let i = 0; i < pixels; i++) {
    const r = data[i * 4];
    const g = data[i * 4 + 1];
    const b = data[i * 4 + 2];
    sumR += r;
    sumG += g;
    sumB += b;
    const max = Math.max(r, g, b);
    const min = Math.min(r, g, b);
    sumV += max / 255;
    const s = max === 0 ? 0 : (max - min) / max;
    sumS += s;
    if (max !== min) {
      const d = max - min;
      let h: number;
      if (max === r) h = 60 * (((g - b) / d) % 6);
      else if (max === g) h = 60 * ((b - r) / d + 2);
      else h = 60 * ((r - g) / d + 4);
      if (h < 0) h += 360;
      if (h < 90 || h >= 330) warm++;
      else cold++;
    }
  }

  const total = sumR + sumG + sumB;
  const redShare = total === 0 ? 1 / 3 : sumR / total;
  const greenShare = total === 0 ? 1 / 3 : sumG / total;
  const blueShare = total === 0 ? 1 / 3 : sumB / total;
  const v = sumV / pixels;
  const s = sumS / pixels;
  return {
    red_share: redShare,
    green_share: greenShare,
    blue_share: blueShare,
    luminance: v,
    saturation: s,
    warm_share: warm / pixels,
    cold_share: cold / pixels,
    pleasure: 0.69 * v + 0.22 * s,
    arousal: -0.31 * v + 0.6 * s,
    dominance: -0.76 * v + 0.32 * s,
  };
}

export const COLOR_FEATURE_NAMES = [
  'red_share',
  'green_share',
  'blue_share',
  'luminance',
  'saturation',
  'warm_share',
  'cold_share',
  'pleasure',
  'arousal',
  'dominance',
] as const;
