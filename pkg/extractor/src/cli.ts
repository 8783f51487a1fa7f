#!/usr/bin/env node
/**
 * CLI: `layout-extract extract <pdf> [-o out.layout.jsonl]`
 * Exit codes: 0 success, 1 extraction error (typed name on stderr), 2 usage.
 */

import { extract, ExtractError } from "./extract.js";

function usage(): never {
  console.error("Usage: layout-extract extract <pdf> [-o out.layout.jsonl]");
  process.exit(2);
}

function main(argv: string[]) {
  const [command, ...rest] = argv;
  if (command !== "extract") usage();
  const positional: string[] = [];
  let outPath: string | undefined;
  for (let i = 0; i < rest.length; i++) {
    const arg = rest[i];
    if (arg === "-o" || arg === "--out") {
      outPath = rest[++i];
      if (!outPath) usage();
    } else if (arg.startsWith("-")) {
      usage();
    } else {
      positional.push(arg);
    }
  }
  if (positional.length !== 1) usage();
  const pdfPath = positional[0];
  if (!outPath) {
    outPath = pdfPath.replace(/\.pdf$/i, "") + ".layout.jsonl";
  }
  try {
    const count = extract(pdfPath, outPath);
    console.log(`wrote ${count} records to ${outPath}`);
  } catch (err) {
    if (err instanceof ExtractError) {
      console.error(`error: ${err.name}: ${err.message}`);
      process.exit(1);
    }
    throw err;
  }
}

main(process.argv.slice(2));
