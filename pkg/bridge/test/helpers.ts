import { spawnSync } from "node:child_process";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

const here = path.dirname(fileURLToPath(import.meta.url));

export const DIST_MAIN = path.resolve(here, "..", "dist", "main.js");
export const REPO_ROOT = path.resolve(here, "..", "..");

export function runServer(
  requests: unknown[],
  args: string[] = [],
): Record<string, unknown>[] {
  const input = requests
    .map((r) => (typeof r === "string" ? r : JSON.stringify(r)))
    .join("\n");
  const result = spawnSync("node", [DIST_MAIN, ...args], {
    input: input + "\n",
    encoding: "utf-8",
  });
  if (result.error) {
    throw result.error;
  }
  return result.stdout
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line));
}

export function runPython(script: string): string {
  const result = spawnSync("python3", ["-c", script], {
    encoding: "utf-8",
    cwd: REPO_ROOT,
  });
  if (result.status !== 0) {
    throw new Error(`python failed: ${result.stderr}`);
  }
  return result.stdout;
}

export function hello(): Record<string, unknown> {
  return { op: "hello", version: "ced-scorer/1" };
}
