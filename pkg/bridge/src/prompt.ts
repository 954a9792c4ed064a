/**
 * Instruction template for the vision-language model. Must stay byte-equal
 * to the tracker client's template: both sides of the protocol build the
 * same prompt so cached completions remain comparable.
 */

const PREFIX =
  "You are a Visual Language Model specifically designed for paired and perfectly " +
  "aligned RGB + thermal images. Please utilize the information from both modes " +
  "simultaneously and detect all targets that match: ";

const SUFFIX =
  "in the image and output their coordinates with [x1,y1,x2,y2] format. " +
  "First output the thinking process in <think></think> tags and then output " +
  "the final answer in <answer></answer> tags. Note that the <answer></answer> " +
  "tags should not contain any text, only the coordinates in the [x1,y1,x2,y2] format.";

export function buildPrompt(query: string): string {
  if (!query) throw new Error("query text must be non-empty");
  return PREFIX + query + SUFFIX;
}
