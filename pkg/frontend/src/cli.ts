#!/usr/bin/env node
// flowplot: render solver CSV output into figures.
//
//   flowplot evolution --spec spec.json
//   flowplot rates     --spec spec.json

import { parseArgs } from 'node:util';
import { loadSpec } from './spec.js';
import { renderEvolution } from './evolution.js';
import { renderRates } from './rates.js';

export function main(argv: string[]): number {
  const { values, positionals } = parseArgs({
    args: argv,
    allowPositionals: true,
    options: { spec: { type: 'string' } },
  });
  const mode = positionals[0];
  if (!mode || !['evolution', 'rates'].includes(mode) || !values.spec) {
    console.error('usage: flowplot evolution|rates --spec spec.json');
    return 2;
  }
  const spec = loadSpec(values.spec);
  const out = mode === 'evolution' ? renderEvolution(spec) : renderRates(spec);
  console.log(`wrote ${out.svg} and ${out.png}`);
  return 0;
}

const entry = process.argv[1] ?? '';
if (entry.endsWith('cli.js') || entry.endsWith('flowplot')) {
  try {
    process.exit(main(process.argv.slice(2)));
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    process.exit(1);
  }
}
