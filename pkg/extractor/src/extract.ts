import { readFile, readdir, writeFile } from 'node:fs/promises'
import path from 'node:path'
import { Backbone, BACKBONE_ID, POOLED_LAYER, INPUT_SIZE } from './backbone'
import { decodeImage } from './image'
import { BadImageError, DataError } from './errors'
import { loadPoses, PoseRecord } from './poses'

export interface ExtractOptions {
  imagesDir: string
  posesCsv: string
  outFile: string
  dim: number
  /** Concurrent image jobs; output order never depends on it. */
  workers?: number
  /** Warning sink, defaults to stderr. */
  warn?: (msg: string) => void
}

export interface ExtractResult {
  written: number
  skipped: string[]
}

const IMAGE_EXTS = new Set(['.png', '.jpg', '.jpeg'])

function round(v: number, places: number): number {
  const m = 10 ** places
  const r = Math.round(v * m) / m
  return Object.is(r, -0) ? 0 : r
}

/** List image files in a directory, sorted by name. */
export async function listImages(dir: string): Promise<string[]> {
  let names: string[]
  try {
    names = await readdir(dir)
  } catch (err) {
    throw new DataError(`cannot list images directory ${dir}: ${(err as Error).message}`)
  }
  return names.filter(n => IMAGE_EXTS.has(path.extname(n).toLowerCase())).sort()
}

async function mapConcurrent<T, R>(
  items: T[],
  workers: number,
  fn: (item: T, index: number) => Promise<R>,
): Promise<R[]> {
  const results = new Array<R>(items.length)
  let next = 0
  async function drain() {
    while (next < items.length) {
      const i = next++
      results[i] = await fn(items[i], i)
    }
  }
  const n = Math.max(1, Math.min(workers, items.length))
  await Promise.all(Array.from({ length: n }, drain))
  return results
}

function frameLine(seq: string, id: number, rec: PoseRecord, feature: Float64Array): string {
  return JSON.stringify({
    seq,
    id,
    t: round(rec.t, 6),
    pose: [round(rec.x, 9), round(rec.y, 9), round(rec.yaw, 9)],
    feature: Array.from(feature, v => round(v, 9)),
    image: rec.image,
  })
}

/**
 * Run a full extraction job: every image listed in the pose sidecar is
 * decoded, pushed through the frozen backbone, and written as one JSONL
 * frame in sidecar row order. Images present in the directory but absent
 * from the sidecar abort the job; images that fail to decode are skipped
 * with a warning and reported in the result.
 */
export async function runExtract(opts: ExtractOptions): Promise<ExtractResult> {
  const warn = opts.warn ?? ((msg: string) => console.error(msg))
  const records = loadPoses(opts.posesCsv)
  const listed = new Set(records.map(r => r.image))
  for (const name of await listImages(opts.imagesDir)) {
    if (!listed.has(name)) {
      throw new DataError(`missing pose record for image ${name}`)
    }
  }
  const backbone = new Backbone(opts.dim)
  const seq = path.basename(path.resolve(opts.imagesDir))

  const features = await mapConcurrent(records, opts.workers ?? 4, async rec => {
    let buf: Buffer
    try {
      buf = await readFile(path.join(opts.imagesDir, rec.image))
    } catch (err) {
      warn(`warning: skipping ${rec.image}: ${(err as Error).message}`)
      return null
    }
    try {
      return backbone.extract(decodeImage(buf))
    } catch (err) {
      if (err instanceof BadImageError) {
        warn(`warning: skipping ${rec.image}: ${err.message}`)
        return null
      }
      throw err
    }
  })

  const lines = [
    `# embed-extractor ${BACKBONE_ID}`,
    `# layer=${POOLED_LAYER} input=${INPUT_SIZE}x${INPUT_SIZE} dim=${opts.dim}`,
  ]
  const skipped: string[] = []
  records.forEach((rec, i) => {
    const f = features[i]
    if (f === null) {
      skipped.push(rec.image)
    } else {
      // id stays the sidecar row index so skips never renumber later frames
      lines.push(frameLine(seq, i, rec, f))
    }
  })
  if (skipped.length === records.length) {
    throw new DataError('no image could be extracted')
  }
  await writeFile(opts.outFile, lines.join('\n') + '\n', 'utf-8')
  return { written: records.length - skipped.length, skipped }
}
