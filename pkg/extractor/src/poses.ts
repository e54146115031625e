import { readFileSync } from 'node:fs'
import Papa from 'papaparse'
import { DataError } from './errors'

export interface PoseRecord {
  image: string
  t: number
  x: number
  y: number
  yaw: number
}

const COLUMNS = ['image_name', 't', 'x', 'y', 'yaw']

/**
 * Load the pose sidecar CSV. Row order is the extraction order, so
 * timestamps must be non-decreasing. The same image may appear on
 * several rows.
 */
export function loadPoses(path: string): PoseRecord[] {
  let text: string
  try {
    text = readFileSync(path, 'utf-8')
  } catch (err) {
    throw new DataError(`cannot read poses file ${path}: ${(err as Error).message}`)
  }
  const parsed = Papa.parse<Record<string, string>>(text, {
    header: true,
    skipEmptyLines: true,
  })
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0]
    throw new DataError(`${path}: row ${(e.row ?? 0) + 2}: ${e.message}`)
  }
  const fields = parsed.meta.fields ?? []
  for (const col of COLUMNS) {
    if (!fields.includes(col)) {
      throw new DataError(`${path}: missing column "${col}"`)
    }
  }
  const records: PoseRecord[] = []
  parsed.data.forEach((row, i) => {
    const image = (row.image_name ?? '').trim()
    if (!image) {
      throw new DataError(`${path}: row ${i + 2}: empty image_name`)
    }
    const nums: number[] = []
    for (const col of ['t', 'x', 'y', 'yaw']) {
      const v = Number(row[col])
      if (!Number.isFinite(v)) {
        throw new DataError(`${path}: row ${i + 2}: ${col} is not a finite number`)
      }
      nums.push(v)
    }
    const [t, x, y, yaw] = nums
    if (records.length > 0 && t < records[records.length - 1].t) {
      throw new DataError(`${path}: row ${i + 2}: time ${t} decreases`)
    }
    records.push({ image, t, x, y, yaw })
  })
  if (records.length === 0) {
    throw new DataError(`${path}: no pose records`)
  }
  return records
}
