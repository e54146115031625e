export class UsageError extends Error {}

export class DataError extends Error {}

/** Per-image failure; the extract loop skips the image instead of aborting. */
export class BadImageError extends Error {}
