/**
 * The full assistant loop: construct-mode editing, suggestion requests,
 * accepting rank-1, and export.
 *
 * The stubbed variant runs everywhere and mirrors the service contract
 * (context_size counts the named elements visible around the masked slot).
 * The live variant exercises the same loop against a running service when
 * MMREC_SERVICE_URL is set, e.g.
 *   mmrec serve --output-dir out &  MMREC_SERVICE_URL=http://127.0.0.1:8080 npm run test:live
 */

import { describe, expect, it, vi } from "vitest";

import { elementCount, parseMetamodel } from "../src/canonical.js";
import { RecommendClient, type RecommendRequest } from "../src/client.js";
import { EditorState } from "../src/editor.js";

function stubService(suggestions: string[]): typeof fetch {
  return vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
    expect(String(url)).toMatch(/\/v1\/recommend$/);
    const request = JSON.parse(String(init?.body)) as RecommendRequest;
    const visible =
      elementCount(request.metamodel) - (request.target !== undefined ? 1 : 0);
    const body = {
      candidates: suggestions
        .slice(0, request.k ?? 5)
        .map((text, i) => ({ text, score: -0.1 * (i + 1) })),
      context_size: visible,
      model_info: { checkpoint: "stub", preset: "desk" },
    };
    return new Response(JSON.stringify(body), {
      status: 200,
      headers: { "content-type": "application/json" },
    });
  }) as typeof fetch;
}

async function driveLoop(client: RecommendClient) {
  const editor = new EditorState("loop");

  // build a 3-class metamodel in construct mode
  expect(editor.addClass("PetriNet")).toBeNull();
  expect(editor.addClass("Place")).toBeNull();
  expect(editor.addClass("Transition")).toBeNull();
  editor.addAttribute("PetriNet", "name", "EString");

  // ask for a pending class name and accept rank-1
  editor.selectPendingSlot({ kind: "class" });
  const first = await client.recommend(editor.buildRequest());
  expect(first.candidates.length).toBeGreaterThan(0);
  editor.applySuggestions(first.candidates, first.context_size);
  const accepted = first.candidates[0].text;
  expect(editor.acceptSuggestion(0)).toBeNull();

  // the accepted suggestion is part of the next request's context
  editor.selectPendingSlot({ kind: "class" });
  const second = await client.recommend(editor.buildRequest());
  expect(second.context_size).toBe(first.context_size + 1);

  // and appears in the exported canonical JSON
  const exported = editor.exportJson();
  const doc = parseMetamodel(exported);
  expect(doc.classes.map((c) => c.name)).toContain(accepted);
  return { editor, accepted };
}

describe("assistant loop (stubbed service)", () => {
  it("accepted suggestions grow the context and survive export", async () => {
    const client = new RecommendClient("http://stub", stubService(["Arc", "Token"]));
    const { accepted } = await driveLoop(client);
    expect(accepted).toBe("Arc");
  });

  it("panel order matches response order", async () => {
    const client = new RecommendClient("http://stub", stubService(["Arc", "Token", "Net"]));
    const editor = new EditorState("x");
    editor.addClass("PetriNet");
    editor.selectPendingSlot({ kind: "class" });
    const response = await client.recommend(editor.buildRequest());
    editor.applySuggestions(response.candidates, response.context_size);
    expect(editor.panel.candidates.map((c) => c.text)).toEqual(["Arc", "Token", "Net"]);
  });
});

const LIVE_URL = process.env.MMREC_SERVICE_URL;

describe.runIf(Boolean(LIVE_URL))("assistant loop (live service)", () => {
  it("runs the construct loop against the real model", async () => {
    const client = new RecommendClient(LIVE_URL!);
    const health = await client.health();
    expect(health.status).toBe("ready");
    await driveLoop(client);
  }, 30_000);
});
