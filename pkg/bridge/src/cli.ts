import { createMockApp } from "./mock.js";
import { checkUpstream, createServeApp, type ServeConfig } from "./server.js";

function usage(): never {
  console.error(
    "usage:\n" +
      "  cli.js serve --model <id> --upstream <url> [--model-width N] [--model-height N] [--port N]\n" +
      "  cli.js mock --frames-dir <dir> --canned-dir <dir> [--model-width N] [--model-height N] [--port N]",
  );
  process.exit(2);
}

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key?.startsWith("--") || value === undefined) usage();
    flags.set(key.slice(2), value);
  }
  return flags;
}

function listen(app: import("express").Express, port: number): void {
  const server = app.listen(port, "127.0.0.1", () => {
    const address = server.address();
    const bound = typeof address === "object" && address ? address.port : port;
    console.log(`BRIDGE_LISTENING http://127.0.0.1:${bound}`);
  });
}

async function main(): Promise<void> {
  const [command, ...rest] = process.argv.slice(2);
  const flags = parseFlags(rest);
  const port = Number(flags.get("port") ?? "8008");
  const modelWidth = Number(flags.get("model-width") ?? "1024");
  const modelHeight = Number(flags.get("model-height") ?? "1024");

  if (command === "mock") {
    const framesDir = flags.get("frames-dir");
    const cannedDir = flags.get("canned-dir");
    if (!framesDir || !cannedDir) usage();
    listen(createMockApp({ framesDir, cannedDir, modelWidth, modelHeight }), port);
    return;
  }

  if (command === "serve") {
    const model = flags.get("model");
    const upstreamUrl = flags.get("upstream") ?? process.env.BRIDGE_UPSTREAM;
    if (!model || !upstreamUrl) usage();
    const cfg: ServeConfig = { model, upstreamUrl, modelWidth, modelHeight };
    try {
      await checkUpstream(cfg);
    } catch (err) {
      console.error(`model not loadable: ${String(err)}`);
      process.exit(1);
    }
    listen(createServeApp(cfg), port);
    return;
  }

  usage();
}

void main();
