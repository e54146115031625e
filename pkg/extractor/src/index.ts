export { Backbone, BACKBONE_ID, POOLED_LAYER, INPUT_SIZE } from './backbone'
export { decodeImage, bilinearResize, RgbImage } from './image'
export { loadPoses, PoseRecord } from './poses'
export { runExtract, listImages, ExtractOptions, ExtractResult } from './extract'
export { UsageError, DataError, BadImageError } from './errors'
