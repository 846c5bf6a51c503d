// Binary PGM/PPM codecs. The service ships rasters base64-encoded in
// JSON; everything here is plain byte shuffling, no image math.

export interface GrayImage {
  width: number;
  height: number;
  pixels: Uint8Array; // row-major
}

export interface RgbImage {
  width: number;
  height: number;
  pixels: Uint8Array; // interleaved rgb
}

export function decodeBase64(b64: string): Uint8Array {
  const binary = atob(b64);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i);
  return bytes;
}

export function encodeBase64(bytes: Uint8Array): string {
  let binary = "";
  for (let i = 0; i < bytes.length; i++) binary += String.fromCharCode(bytes[i]);
  return btoa(binary);
}

function parseHeader(bytes: Uint8Array, magic: string): { fields: number[]; offset: number } {
  if (String.fromCharCode(bytes[0], bytes[1]) !== magic) {
    throw new Error(`expected ${magic} raster`);
  }
  const fields: number[] = [];
  let pos = 2;
  while (fields.length < 3) {
    while (pos < bytes.length && isSpace(bytes[pos])) pos++;
    if (bytes[pos] === 0x23) { // '#' comment
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < bytes.length && !isSpace(bytes[pos])) pos++;
    fields.push(Number(textOf(bytes, start, pos)));
  }
  pos++; // single whitespace byte after maxval
  if (fields[2] !== 255) throw new Error(`unsupported maxval ${fields[2]}`);
  return { fields, offset: pos };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x0a || byte === 0x0d || byte === 0x09;
}

function textOf(bytes: Uint8Array, start: number, end: number): string {
  let s = "";
  for (let i = start; i < end; i++) s += String.fromCharCode(bytes[i]);
  return s;
}

export function parsePgm(bytes: Uint8Array): GrayImage {
  const { fields, offset } = parseHeader(bytes, "P5");
  const [width, height] = fields;
  if (bytes.length - offset < width * height) throw new Error("truncated PGM");
  return { width, height, pixels: bytes.slice(offset, offset + width * height) };
}

export function parsePpm(bytes: Uint8Array): RgbImage {
  const { fields, offset } = parseHeader(bytes, "P6");
  const [width, height] = fields;
  const need = width * height * 3;
  if (bytes.length - offset < need) throw new Error("truncated PPM");
  return { width, height, pixels: bytes.slice(offset, offset + need) };
}

export function encodePgm(image: GrayImage): Uint8Array {
  const header = `P5\n${image.width} ${image.height}\n255\n`;
  const out = new Uint8Array(header.length + image.pixels.length);
  for (let i = 0; i < header.length; i++) out[i] = header.charCodeAt(i);
  out.set(image.pixels, header.length);
  return out;
}

export function flipHorizontal(image: GrayImage): GrayImage {
  const { width, height, pixels } = image;
  const out = new Uint8Array(pixels.length);
  for (let r = 0; r < height; r++) {
    for (let c = 0; c < width; c++) {
      out[r * width + c] = pixels[r * width + (width - 1 - c)];
    }
  }
  return { width, height, pixels: out };
}

/** RGBA buffer for ImageData. Gray images render ink-on-paper. */
export function grayToRgba(image: GrayImage): Uint8ClampedArray {
  const out = new Uint8ClampedArray(image.width * image.height * 4);
  for (let i = 0; i < image.pixels.length; i++) {
    const v = 255 - image.pixels[i];
    out[i * 4] = v;
    out[i * 4 + 1] = v;
    out[i * 4 + 2] = v;
    out[i * 4 + 3] = 255;
  }
  return out;
}

export function rgbToRgba(image: RgbImage): Uint8ClampedArray {
  const n = image.width * image.height;
  const out = new Uint8ClampedArray(n * 4);
  for (let i = 0; i < n; i++) {
    out[i * 4] = image.pixels[i * 3];
    out[i * 4 + 1] = image.pixels[i * 3 + 1];
    out[i * 4 + 2] = image.pixels[i * 3 + 2];
    out[i * 4 + 3] = 255;
  }
  return out;
}
