// End-to-end walk-through against a live service, exercising the same client
// the browser UI uses: create a session, chat >= 3 turns, submit a verdict
// with database-correct values, and confirm the metrics reflect one verified
// success.  Exits nonzero on the first failed step.
//
// Env: SERVICE_URL (default http://127.0.0.1:8713)
//      WORLD_JSON  (path to the served snapshot's world.json, used by the
//                   harness to look up correct slot values; the UI itself
//                   never reads it)

import { readFileSync } from "node:fs";

import { ServiceClient } from "../src/api.js";
import type { Goal } from "../src/api.js";

const SLOT_PHRASES: Record<string, string> = {
  pricerange: "price range",
  stars: "star rating",
  fee: "entrance fee",
  postcode: "post code",
  phone: "phone number",
  dining: "dining style",
};

interface WorldFile {
  entities: Record<string, Array<Record<string, string>>>;
}

function phrase(slot: string): string {
  return SLOT_PHRASES[slot] ?? slot;
}

function goalValues(goal: Goal, world: WorldFile): Record<string, string> {
  const values: Record<string, string> = {};
  for (const part of goal.domains) {
    const matching = world.entities[part.domain].filter((entity) =>
      Object.entries(part.constraints).every(([slot, value]) => entity[slot] === value),
    );
    if (matching.length === 0) {
      throw new Error(`no entity satisfies the ${part.domain} constraints`);
    }
    for (const slot of part.requests) {
      values[`${part.domain}.${slot}`] = matching[0][slot];
    }
  }
  return values;
}

let failures = 0;

function check(name: string, ok: boolean, detail = ""): void {
  const mark = ok ? "PASS" : "FAIL";
  console.log(`[${mark}] ${name}${detail ? `  (${detail})` : ""}`);
  if (!ok) failures += 1;
}

async function main(): Promise<void> {
  const baseUrl = process.env.SERVICE_URL ?? "http://127.0.0.1:8713";
  const worldPath = process.env.WORLD_JSON;
  if (!worldPath) {
    throw new Error("WORLD_JSON must point at the served snapshot's world.json");
  }
  const world = JSON.parse(readFileSync(worldPath, "utf-8")) as WorldFile;
  const client = new ServiceClient(baseUrl);

  check("service is healthy", await client.health(), baseUrl);

  const created = await client.createSession(1);
  const goal = created.goal;
  check("session created with a goal", created.session_id.length > 0 && goal.domains.length === 1);

  const part = goal.domains[0];
  const texts: string[] = [];
  for (const [slot, value] of Object.entries(part.constraints)) {
    texts.push(`i need a ${part.domain} with a ${phrase(slot)} of ${value} .`);
  }
  for (const slot of part.requests) {
    texts.push(`what is the ${phrase(slot)} of the ${part.domain} ?`);
  }
  while (texts.length < 3) {
    texts.push(`can you tell me the ${part.domain} 's name ?`);
  }

  let turns = 0;
  for (const text of texts) {
    const reply = await client.sendUtterance(created.session_id, text);
    turns = reply.turn_index;
    if (reply.dialog_over) break;
  }
  check("exchanged at least 3 turns", turns >= 3, `turns=${turns}`);

  const values = goalValues(goal, world);
  const verdict = await client.submitVerdict(created.session_id, true, values);
  check("verdict verified with correct values", verdict.verified,
        JSON.stringify(verdict.per_slot));

  const record = await client.getSession(created.session_id);
  check("session record matches the verdict", record.verdict !== null && record.verdict.verified === verdict.verified);
  check("record holds the full transcript", record.turns.length === turns);

  const metrics = await client.metrics();
  check("metrics reflect one verified success", metrics.verified_successes >= 1,
        JSON.stringify(metrics));

  if (failures > 0) {
    console.error(`${failures} step(s) failed`);
    process.exit(1);
  }
  console.log("smoke test passed");
}

main().catch((error) => {
  console.error(`smoke test crashed: ${error}`);
  process.exit(1);
});
