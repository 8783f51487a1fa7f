/**
 * Layout-aware PDF extraction to the `.layout.jsonl` interchange format.
 *
 * One JSON record per line with keys `page`, `kind`, `bbox`, `text`,
 * `font_size`, `font_bold`; absent optional keys mean "not present". The
 * first line is a `#` comment record documenting the extractor settings.
 * MuPDF structured text already uses a top-left origin with y increasing
 * downward, which is exactly what the interchange format demands, so the
 * coordinate conversion is the identity here (extractors with a bottom-left
 * origin must flip before emitting).
 */

import * as fs from "node:fs";
import * as mupdf from "mupdf";

export class ExtractError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

export class UnreadablePdf extends ExtractError {}
export class EncryptedPdf extends ExtractError {}
export class NoTextLayer extends ExtractError {}

export interface LayoutRecord {
  page: number;
  kind: "text-line" | "figure";
  bbox: [number, number, number, number];
  text: string;
  font_size?: number;
  font_bold?: boolean;
}

interface StBbox {
  x: number;
  y: number;
  w: number;
  h: number;
}

interface StLine {
  bbox: StBbox;
  font?: { name?: string; weight?: string; size?: number };
  text?: string;
}

interface StBlock {
  type: string;
  bbox: StBbox;
  lines?: StLine[];
}

const HEADER_COMMENT =
  "# layout-extractor v0.1.0; engine=mupdf; granularity=line; origin=top-left";

function toBbox(b: StBbox): [number, number, number, number] | null {
  if (!(b.w > 0) || !(b.h > 0)) return null;
  return [b.x, b.y, b.x + b.w, b.y + b.h];
}

function lineRecord(page: number, line: StLine): LayoutRecord | null {
  const text = (line.text ?? "").trim();
  if (!text) return null;
  const bbox = toBbox(line.bbox);
  if (bbox === null) return null;
  const size = line.font?.size;
  if (!(size && size > 0)) return null;
  const bold =
    line.font?.weight === "bold" || /bold/i.test(line.font?.name ?? "");
  return {
    page,
    kind: "text-line",
    bbox,
    text,
    font_size: size,
    font_bold: bold,
  };
}

export function extractRecords(pdfBytes: Uint8Array): LayoutRecord[] {
  let doc: mupdf.Document;
  try {
    doc = mupdf.Document.openDocument(pdfBytes, "application/pdf");
  } catch (err) {
    throw new UnreadablePdf(`cannot open PDF: ${String(err)}`);
  }
  if (doc.needsPassword()) {
    throw new EncryptedPdf("PDF is password protected");
  }

  const records: LayoutRecord[] = [];
  let textLines = 0;
  const pageCount = doc.countPages();
  for (let index = 0; index < pageCount; index++) {
    const page = doc.loadPage(index);
    const structured = JSON.parse(
      page.toStructuredText("preserve-images").asJSON()
    ) as { blocks: StBlock[] };
    for (const block of structured.blocks) {
      if (block.type === "text") {
        for (const line of block.lines ?? []) {
          const record = lineRecord(index + 1, line);
          if (record) {
            records.push(record);
            textLines += 1;
          }
        }
      } else if (block.type === "image") {
        const bbox = toBbox(block.bbox);
        if (bbox) {
          records.push({ page: index + 1, kind: "figure", bbox, text: "" });
        }
      }
    }
  }
  if (textLines === 0) {
    throw new NoTextLayer("PDF has no extractable text layer");
  }
  return records;
}

/** Extract a PDF into a `.layout.jsonl` file; returns the record count. */
export function extract(pdfPath: string, outPath: string): number {
  let bytes: Uint8Array;
  try {
    bytes = fs.readFileSync(pdfPath);
  } catch (err) {
    throw new UnreadablePdf(`cannot read ${pdfPath}: ${String(err)}`);
  }
  const records = extractRecords(bytes);
  const lines = [HEADER_COMMENT, ...records.map((r) => JSON.stringify(r))];
  fs.writeFileSync(outPath, lines.join("\n") + "\n", "utf-8");
  return records.length;
}
