import { PNG } from 'pngjs';

export function makePng(
  width: number,
  height: number,
  rgba: (x: number, y: number) => [number, number, number, number],
  writeOptions: Parameters<typeof PNG.sync.write>[1] = {},
): Buffer {
  const png = new PNG({ width, height });
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = (y * width + x) * 4;
      const [r, g, b, a] = rgba(x, y);
      png.data[i] = r;
      png.data[i + 1] = g;
      png.data[i + 2] = b;
      png.data[i + 3] = a;
    }
  }
  return PNG.sync.write(png, writeOptions);
}
