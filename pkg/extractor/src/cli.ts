#!/usr/bin/env node
import { mkdir } from 'node:fs/promises';

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { runExtract } from './extract.js';

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .command('extract', 'extract features and embeddings from raw posts')
    .option('images', { type: 'string', demandOption: true, describe: 'directory of image files' })
    .option('captions', { type: 'string', demandOption: true, describe: 'JSONL of posts (post_id, caption, metadata...)' })
    .option('out', { type: 'string', demandOption: true, describe: 'output directory' })
    .option('backend', {
      type: 'string',
      default: 'hash',
      choices: ['hash', 'pretrained'],
      describe: 'embedding backend (hash = deterministic offline stand-in)',
    })
    .option('model-dir', { type: 'string', describe: 'local pretrained model directory' })
    .demandCommand(1)
    .strict()
    .parse();

  await mkdir(argv.out, { recursive: true });
  const result = await runExtract({
    imagesDir: argv.images,
    captionsFile: argv.captions,
    outDir: argv.out,
    backend: argv.backend,
    modelDir: argv['model-dir'],
  });
  console.log(
    `extracted ${result.posts} posts, ${result.features.length} feature columns, ` +
      `${result.diagnostics.length} diagnostics`,
  );
  return 0;
}

main()
  .then(code => process.exit(code))
  .catch(err => {
    console.error(`error: ${(err as Error).message}`);
    process.exit(1);
  });
