export { colorFeatures, decodeImage, COLOR_FEATURE_NAMES } from './color.js';
export {
  HashEmbeddingBackend,
  IMAGE_DIM,
  TEXT_DIM,
  makeBackend,
  pretrainedBackend,
  writeEmbeddings,
} from './embeddings.js';
export { extractMetadataFeatures, isEnglishLike } from './metadata.js';
export { readCaptionsFile, runExtract } from './extract.js';
export { writeDiagnostics, writePostsCsv, REQUIRED_COLUMNS } from './writer.js';
export type { Diagnostic, FeatureRecord, RawPost } from './types.js';
