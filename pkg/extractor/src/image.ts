import { PNG } from 'pngjs'
import jpeg from 'jpeg-js'
import { BadImageError } from './errors'

/** Interleaved RGB, values in [0, 255], row-major. */
export interface RgbImage {
  width: number
  height: number
  data: Float64Array
}

const PNG_MAGIC = Buffer.from([0x89, 0x50, 0x4e, 0x47])
const JPEG_MAGIC = Buffer.from([0xff, 0xd8, 0xff])

function rgbaToRgb(rgba: Uint8Array, width: number, height: number): RgbImage {
  const data = new Float64Array(width * height * 3)
  for (let p = 0; p < width * height; p++) {
    data[p * 3] = rgba[p * 4]
    data[p * 3 + 1] = rgba[p * 4 + 1]
    data[p * 3 + 2] = rgba[p * 4 + 2]
  }
  return { width, height, data }
}

/** Decode a PNG or JPEG buffer, dispatching on magic bytes. */
export function decodeImage(buf: Buffer): RgbImage {
  try {
    if (buf.subarray(0, 4).equals(PNG_MAGIC)) {
      const png = PNG.sync.read(buf)
      return rgbaToRgb(png.data, png.width, png.height)
    }
    if (buf.subarray(0, 3).equals(JPEG_MAGIC)) {
      const img = jpeg.decode(buf, { useTArray: true, formatAsRGBA: true })
      return rgbaToRgb(img.data, img.width, img.height)
    }
  } catch (err) {
    throw new BadImageError(`decode failed: ${(err as Error).message}`)
  }
  throw new BadImageError('unrecognized image format (expected PNG or JPEG)')
}

/**
 * Bilinear resample with half-pixel centers and edge clamping.
 * Resizing to the source size reproduces it exactly.
 */
export function bilinearResize(img: RgbImage, width: number, height: number): RgbImage {
  if (width === img.width && height === img.height) {
    return { width, height, data: img.data.slice() }
  }
  const out = new Float64Array(width * height * 3)
  const sx = img.width / width
  const sy = img.height / height
  for (let y = 0; y < height; y++) {
    const fy = Math.min(Math.max((y + 0.5) * sy - 0.5, 0), img.height - 1)
    const y0 = Math.floor(fy)
    const y1 = Math.min(y0 + 1, img.height - 1)
    const wy = fy - y0
    for (let x = 0; x < width; x++) {
      const fx = Math.min(Math.max((x + 0.5) * sx - 0.5, 0), img.width - 1)
      const x0 = Math.floor(fx)
      const x1 = Math.min(x0 + 1, img.width - 1)
      const wx = fx - x0
      for (let c = 0; c < 3; c++) {
        const p00 = img.data[(y0 * img.width + x0) * 3 + c]
        const p01 = img.data[(y0 * img.width + x1) * 3 + c]
        const p10 = img.data[(y1 * img.width + x0) * 3 + c]
        const p11 = img.data[(y1 * img.width + x1) * 3 + c]
        const top = p00 + (p01 - p00) * wx
        const bot = p10 + (p11 - p10) * wx
        out[(y * width + x) * 3 + c] = top + (bot - top) * wy
      }
    }
  }
  return { width, height, data: out }
}
