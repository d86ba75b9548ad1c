import { readFileSync } from "node:fs";
import type { DatamationDoc } from "../src/types.js";

export function loadGolden(name: string): DatamationDoc {
  const url = new URL(`../../tests/goldens/${name}`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf-8")) as DatamationDoc;
}
