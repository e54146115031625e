import { RgbImage, bilinearResize } from './image'
import { BadImageError } from './errors'

export const BACKBONE_ID = 'dsconv3-seeded'
export const POOLED_LAYER = 'block3_pointwise/gap'
export const INPUT_SIZE = 64

// Frozen weights are drawn once from this seed; changing it changes every
// feature ever emitted, so treat it as part of the format.
const WEIGHT_SEED = 0x5eedcafe

interface Tensor3 {
  h: number
  w: number
  c: number
  data: Float64Array
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

function heUniform(rand: () => number, count: number, fanIn: number): Float64Array {
  const limit = Math.sqrt(6 / fanIn)
  const w = new Float64Array(count)
  for (let i = 0; i < count; i++) {
    w[i] = (rand() * 2 - 1) * limit
  }
  return w
}

// Zero-padded 3x3 convolution, weights laid out [ky][kx][cin][cout].
function conv3x3(input: Tensor3, weights: Float64Array, cout: number, stride: number): Tensor3 {
  const { h, w, c } = input
  const oh = Math.floor((h - 1) / stride) + 1
  const ow = Math.floor((w - 1) / stride) + 1
  const out = new Float64Array(oh * ow * cout)
  for (let oy = 0; oy < oh; oy++) {
    for (let ox = 0; ox < ow; ox++) {
      const base = (oy * ow + ox) * cout
      for (let ky = 0; ky < 3; ky++) {
        const iy = oy * stride + ky - 1
        if (iy < 0 || iy >= h) continue
        for (let kx = 0; kx < 3; kx++) {
          const ix = ox * stride + kx - 1
          if (ix < 0 || ix >= w) continue
          const ibase = (iy * w + ix) * c
          const wbase = (ky * 3 + kx) * c * cout
          for (let ci = 0; ci < c; ci++) {
            const v = input.data[ibase + ci]
            const wrow = wbase + ci * cout
            for (let co = 0; co < cout; co++) {
              out[base + co] += v * weights[wrow + co]
            }
          }
        }
      }
    }
  }
  return { h: oh, w: ow, c: cout, data: out }
}

// Per-channel 3x3 convolution, weights laid out [ky][kx][c].
function depthwise3x3(input: Tensor3, weights: Float64Array, stride: number): Tensor3 {
  const { h, w, c } = input
  const oh = Math.floor((h - 1) / stride) + 1
  const ow = Math.floor((w - 1) / stride) + 1
  const out = new Float64Array(oh * ow * c)
  for (let oy = 0; oy < oh; oy++) {
    for (let ox = 0; ox < ow; ox++) {
      const base = (oy * ow + ox) * c
      for (let ky = 0; ky < 3; ky++) {
        const iy = oy * stride + ky - 1
        if (iy < 0 || iy >= h) continue
        for (let kx = 0; kx < 3; kx++) {
          const ix = ox * stride + kx - 1
          if (ix < 0 || ix >= w) continue
          const ibase = (iy * w + ix) * c
          const wbase = (ky * 3 + kx) * c
          for (let ci = 0; ci < c; ci++) {
            out[base + ci] += input.data[ibase + ci] * weights[wbase + ci]
          }
        }
      }
    }
  }
  return { h: oh, w: ow, c, data: out }
}

// 1x1 convolution, weights laid out [cin][cout].
function pointwise(input: Tensor3, weights: Float64Array, cout: number): Tensor3 {
  const { h, w, c } = input
  const out = new Float64Array(h * w * cout)
  for (let p = 0; p < h * w; p++) {
    const ibase = p * c
    const obase = p * cout
    for (let ci = 0; ci < c; ci++) {
      const v = input.data[ibase + ci]
      if (v === 0) continue
      const wrow = ci * cout
      for (let co = 0; co < cout; co++) {
        out[obase + co] += v * weights[wrow + co]
      }
    }
  }
  return { h, w, c: cout, data: out }
}

function relu(t: Tensor3): Tensor3 {
  for (let i = 0; i < t.data.length; i++) {
    if (t.data[i] < 0) t.data[i] = 0
  }
  return t
}

function globalAveragePool(t: Tensor3): Float64Array {
  const out = new Float64Array(t.c)
  const n = t.h * t.w
  for (let p = 0; p < n; p++) {
    for (let ci = 0; ci < t.c; ci++) {
      out[ci] += t.data[p * t.c + ci]
    }
  }
  for (let ci = 0; ci < t.c; ci++) {
    out[ci] /= n
  }
  return out
}

/**
 * Small frozen convolutional backbone: a strided stem plus three
 * depthwise-separable blocks, global-average-pooled to a unit vector.
 *
 * Weights come from a fixed seed rather than a pretrained checkpoint, so
 * the mapping from image bytes to feature is a pure deterministic function
 * of the pixels and the requested output dimension.
 */
export class Backbone {
  readonly dim: number
  private stemW: Float64Array
  private dw1: Float64Array
  private pw1: Float64Array
  private dw2: Float64Array
  private pw2: Float64Array
  private dw3: Float64Array
  private pw3: Float64Array

  constructor(dim: number) {
    if (!Number.isInteger(dim) || dim < 1 || dim > 4096) {
      throw new RangeError(`dim must be an integer in [1, 4096], got ${dim}`)
    }
    this.dim = dim
    // Draw order is fixed; dim only changes how many values the last
    // projection consumes, so lower layers are identical across dims.
    const rand = mulberry32(WEIGHT_SEED)
    this.stemW = heUniform(rand, 3 * 3 * 3 * 16, 3 * 3 * 3)
    this.dw1 = heUniform(rand, 3 * 3 * 16, 9)
    this.pw1 = heUniform(rand, 16 * 32, 16)
    this.dw2 = heUniform(rand, 3 * 3 * 32, 9)
    this.pw2 = heUniform(rand, 32 * 64, 32)
    this.dw3 = heUniform(rand, 3 * 3 * 64, 9)
    this.pw3 = heUniform(rand, 64 * dim, 64)
  }

  /** Map an RGB image to an L2-normalized feature of length dim. */
  extract(img: RgbImage): Float64Array {
    const resized = bilinearResize(img, INPUT_SIZE, INPUT_SIZE)
    const input: Tensor3 = {
      h: INPUT_SIZE,
      w: INPUT_SIZE,
      c: 3,
      data: resized.data,
    }
    for (let i = 0; i < input.data.length; i++) {
      input.data[i] = input.data[i] / 127.5 - 1
    }
    let t = relu(conv3x3(input, this.stemW, 16, 2))
    t = relu(pointwise(depthwise3x3(t, this.dw1, 2), this.pw1, 32))
    t = relu(pointwise(depthwise3x3(t, this.dw2, 2), this.pw2, 64))
    t = pointwise(depthwise3x3(t, this.dw3, 1), this.pw3, this.dim)
    const pooled = globalAveragePool(t)
    let norm = 0
    for (const v of pooled) norm += v * v
    norm = Math.sqrt(norm)
    if (norm < 1e-12) {
      throw new BadImageError('degenerate image: pooled feature has zero norm')
    }
    for (let i = 0; i < pooled.length; i++) pooled[i] /= norm
    return pooled
  }
}
