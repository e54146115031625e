import { describe, it, expect } from 'vitest'
import { mkdtempSync, writeFileSync } from 'node:fs'
import os from 'node:os'
import path from 'node:path'
import { fileURLToPath } from 'node:url'
import { loadPoses } from '../src/poses'
import { DataError } from '../src/errors'

const HERE = path.dirname(fileURLToPath(import.meta.url))

function csvFile(content: string): string {
  const dir = mkdtempSync(path.join(os.tmpdir(), 'poses-'))
  const p = path.join(dir, 'poses.csv')
  writeFileSync(p, content)
  return p
}

describe('loadPoses', () => {
  it('parses the bundled sidecar in row order', () => {
    const recs = loadPoses(path.join(HERE, 'fixtures', 'poses.csv'))
    expect(recs.map(r => r.image)).toEqual(['a.png', 'b.png', 'c.png'])
    expect(recs[1]).toEqual({ image: 'b.png', t: 0.5, x: 1, y: 0, yaw: 0 })
  })

  it('allows repeated images and equal timestamps', () => {
    const recs = loadPoses(csvFile('image_name,t,x,y,yaw\na.png,1,0,0,0\na.png,1,2,0,0\n'))
    expect(recs).toHaveLength(2)
    expect(recs[0].image).toBe('a.png')
    expect(recs[1].x).toBe(2)
  })

  it('rejects a missing column', () => {
    expect(() => loadPoses(csvFile('image_name,t,x,y\na.png,0,0,0\n'))).toThrow(/missing column "yaw"/)
  })

  it('rejects non-numeric fields with the row number', () => {
    expect(() => loadPoses(csvFile('image_name,t,x,y,yaw\na.png,0,oops,0,0\n'))).toThrow(/row 2: x/)
  })

  it('rejects decreasing timestamps', () => {
    const body = 'image_name,t,x,y,yaw\na.png,2,0,0,0\nb.png,1,0,0,0\n'
    expect(() => loadPoses(csvFile(body))).toThrow(/row 3: time 1 decreases/)
  })

  it('rejects empty files and missing files', () => {
    expect(() => loadPoses(csvFile('image_name,t,x,y,yaw\n'))).toThrow(DataError)
    expect(() => loadPoses('/nonexistent/poses.csv')).toThrow(/cannot read/)
  })
})
