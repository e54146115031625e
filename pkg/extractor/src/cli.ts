#!/usr/bin/env node
import { parseArgs } from 'node:util'
import { runExtract } from './extract'
import { DataError, UsageError } from './errors'

const USAGE = `usage: embed-extract --images DIR --poses CSV --out FILE [--dim D] [--workers N]

Converts an image directory plus a pose sidecar CSV (image_name,t,x,y,yaw)
into a sequence JSONL file of L2-normalized pooled backbone features.

exit codes: 0 ok, 1 some images skipped, 2 usage error, 3 data error`

function intFlag(name: string, raw: string, min: number, max: number): number {
  const v = Number(raw)
  if (!Number.isInteger(v) || v < min || v > max) {
    throw new UsageError(`--${name} must be an integer in [${min}, ${max}], got ${raw}`)
  }
  return v
}

export async function main(argv: string[]): Promise<number> {
  let parsed
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        images: { type: 'string' },
        poses: { type: 'string' },
        out: { type: 'string' },
        dim: { type: 'string', default: '64' },
        workers: { type: 'string', default: '4' },
        help: { type: 'boolean', short: 'h', default: false },
      },
      allowPositionals: false,
    })
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    console.error(USAGE)
    return 2
  }
  if (parsed.values.help) {
    console.log(USAGE)
    return 0
  }
  try {
    const { images, poses, out } = parsed.values
    if (!images || !poses || !out) {
      throw new UsageError('--images, --poses and --out are required')
    }
    const result = await runExtract({
      imagesDir: images,
      posesCsv: poses,
      outFile: out,
      dim: intFlag('dim', parsed.values.dim, 1, 4096),
      workers: intFlag('workers', parsed.values.workers, 1, 64),
    })
    if (result.skipped.length > 0) {
      console.error(`wrote ${result.written} frames, skipped ${result.skipped.length}`)
      return 1
    }
    return 0
  } catch (err) {
    if (err instanceof UsageError || err instanceof RangeError) {
      console.error(`error: ${err.message}`)
      console.error(USAGE)
      return 2
    }
    if (err instanceof DataError) {
      console.error(`error: ${err.message}`)
      return 3
    }
    throw err
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then(
    code => process.exit(code),
    err => {
      console.error(err)
      process.exit(4)
    },
  )
}
