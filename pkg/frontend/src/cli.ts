import yargs from 'yargs';
import { plot } from './plot';

const args = yargs(process.argv.slice(2))
  .usage('Render figures from spde-sync experiment output')
  .string('csv').demandOption('csv').describe('csv', 'experiment CSV file')
  .string('kind').demandOption('kind')
  .describe('kind', 'experiment kind (sync_rate, coming_down, pullback, order)')
  .string('out').demandOption('out').describe('out', 'output SVG path')
  .string('summary')
  .describe('summary', 'experiment summary JSON (fit window, moment order)')
  .boolean('linear-y').default('linear-y', false)
  .describe('linear-y', 'use a linear y axis instead of log scale')
  .boolean('no-fit').default('no-fit', false)
  .describe('no-fit', 'suppress the fitted-line overlay')
  .strict()
  .parseSync();

try {
  const result = plot({
    csvPath: args.csv,
    kind: args.kind,
    outPath: args.out,
    summaryPath: args.summary,
    logY: !args['linear-y'],
    fitOverlay: !args['no-fit'],
  });
  console.log(`wrote ${result.outPath}`);
  for (const line of result.legend) {
    console.log(`  ${line}`);
  }
} catch (err) {
  console.error(`error: ${err instanceof Error ? err.message : err}`);
  process.exit(1);
}
