/** Binary PPM (P6, 8-bit) decode/encode. The folder dataset format. */

export interface RawImage {
  width: number;
  height: number;
  /** interleaved RGB, row-major, 0..255 */
  pixels: Uint8Array;
}

export function decodePpm(buf: Buffer): RawImage {
  let pos = 0;
  const token = (): string => {
    // skip whitespace and '#' comment lines between header tokens
    for (;;) {
      while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++;
      if (pos < buf.length && buf[pos] === 0x23) {
        while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      } else {
        break;
      }
    }
    const start = pos;
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++;
    return buf.toString("ascii", start, pos);
  };

  if (token() !== "P6") {
    throw new Error("not a binary PPM (P6) image");
  }
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  const maxval = parseInt(token(), 10);
  if (!(width > 0 && height > 0)) {
    throw new Error(`bad PPM dimensions ${width}x${height}`);
  }
  if (maxval !== 255) {
    throw new Error(`unsupported PPM maxval ${maxval} (expected 255)`);
  }
  pos++; // single whitespace after maxval
  const need = width * height * 3;
  if (buf.length - pos < need) {
    throw new Error(`truncated PPM: need ${need} pixel bytes, have ${buf.length - pos}`);
  }
  return { width, height, pixels: new Uint8Array(buf.subarray(pos, pos + need)) };
}

export function encodePpm(image: RawImage): Buffer {
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, "ascii");
  return Buffer.concat([header, Buffer.from(image.pixels)]);
}
