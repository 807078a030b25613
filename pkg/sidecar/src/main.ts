/** CLI: `serve [--port N]` or `conformance [--golden DIR] [--url BASE]`. */

import type { Server } from "node:http";

import { createApp, SIDECAR_VERSION } from "./server.js";
import { runConformance } from "./conformance.js";

function argValue(args: string[], flag: string, fallback: string): string {
  const i = args.indexOf(flag);
  return i >= 0 && i + 1 < args.length ? args[i + 1] : fallback;
}

async function main(): Promise<number> {
  const [command, ...args] = process.argv.slice(2);
  if (command === "serve") {
    const port = parseInt(argValue(args, "--port", "8602"), 10);
    const host = argValue(args, "--host", "127.0.0.1");
    const app = createApp();
    app.listen(port, host, () => {
      console.log(`anonpipe sidecar ${SIDECAR_VERSION} (protocol v1) on http://${host}:${port}`);
    });
    return 0;
  }
  if (command === "conformance") {
    const golden = argValue(args, "--golden", "../goldens/v1");
    const url = argValue(args, "--url", "");
    let base = url;
    let server: Server | null = null;
    if (!base) {
      const app = createApp();
      server = await new Promise<Server>((resolve) => {
        const s: Server = app.listen(0, "127.0.0.1", () => resolve(s));
      });
      const addr = server.address();
      if (addr === null || typeof addr === "string") throw new Error("no listen address");
      base = `http://127.0.0.1:${addr.port}`;
    }
    try {
      const { outcomes, passed } = await runConformance(golden, base);
      for (const o of outcomes) {
        console.log(`${o.ok ? "PASS" : "FAIL"} ${o.op.padEnd(11)} ${o.detail}`);
      }
      return passed ? 0 : 1;
    } finally {
      server?.close();
    }
  }
  console.error("usage: main.js serve [--port N] | conformance [--golden DIR] [--url BASE]");
  return 2;
}

main().then(
  (code) => {
    if (code !== 0) process.exitCode = code;
  },
  (err) => {
    console.error(err);
    process.exitCode = 1;
  },
);
