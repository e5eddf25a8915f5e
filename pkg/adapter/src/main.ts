#!/usr/bin/env node
import { serve } from "./serve";
import { StrategyName } from "./strategies";

const STRATEGIES: StrategyName[] = ["prior-oracle-reimpl", "threshold-in-bbox"];

function parseArgs(argv: string[]) {
  let strategy: StrategyName = "prior-oracle-reimpl";
  let logLevel: "quiet" | "info" | "debug" = "info";
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--strategy") {
      const value = argv[++i];
      if (!STRATEGIES.includes(value as StrategyName)) {
        process.stderr.write(`unknown strategy ${value}\n`);
        process.exit(2);
      }
      strategy = value as StrategyName;
    } else if (argv[i] === "--log-level") {
      const value = argv[++i];
      if (value !== "quiet" && value !== "info" && value !== "debug") {
        process.stderr.write(`unknown log level ${value}\n`);
        process.exit(2);
      }
      logLevel = value;
    } else {
      process.stderr.write(`unknown argument ${argv[i]}\n`);
      process.exit(2);
    }
  }
  return { strategy, logLevel };
}

async function main() {
  const options = parseArgs(process.argv.slice(2));
  const code = await serve(process.stdin, process.stdout, options);
  process.exit(code);
}

void main();
