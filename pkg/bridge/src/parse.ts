/**
 * Coordinate extraction from model text, mirroring the tracker client's
 * parser: quadruples are read from the single <answer></answer> block and
 * inverted-corner sets are dropped. The client re-parses raw_text anyway;
 * the boxes field is a convenience for other consumers.
 */

const NUM = "[-+]?(?:\\d+\\.?\\d*|\\.\\d+)(?:[eE][-+]?\\d+)?";
const QUAD_RE = new RegExp(
  `\\[\\s*(${NUM})\\s*,\\s*(${NUM})\\s*,\\s*(${NUM})\\s*,\\s*(${NUM})\\s*\\]`,
  "g",
);

export type Box = [number, number, number, number];

function singleBlock(text: string, open: string, close: string): string | null {
  const first = text.indexOf(open);
  if (first < 0 || text.indexOf(open, first + 1) >= 0) return null;
  const end = text.indexOf(close);
  if (end < 0 || end < first || text.indexOf(close, end + 1) >= 0) return null;
  return text.slice(first + open.length, end);
}

export function extractAnswerBoxes(rawText: string): Box[] {
  const answer = singleBlock(rawText, "<answer>", "</answer>");
  if (answer === null) return [];
  const boxes: Box[] = [];
  for (const match of answer.matchAll(QUAD_RE)) {
    const [x1, y1, x2, y2] = match.slice(1, 5).map(Number);
    if (x2 <= x1 || y2 <= y1) continue;
    boxes.push([x1, y1, x2, y2]);
  }
  return boxes;
}
