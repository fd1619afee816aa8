import { describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import {
  ConsoleApp,
  disagreeingAgents,
  pluralityLabels,
  shortcutMap,
  tallySegments,
} from "../src/app.js";
import { FakeReviewServer, makeItem } from "./fakeServer.js";

function consoleOver(server: FakeReviewServer): ConsoleApp {
  return new ConsoleApp(new ReviewApi("", server.fetch));
}

describe("view-model helpers", () => {
  const item = makeItem("c0", "Review");

  it("tally segments are proportional over the whole committee", () => {
    const segments = tallySegments(item, ["AF", "Non-AF", "Uncertain"]);
    expect(segments.map((s) => s.count)).toEqual([3, 2, 2]);
    expect(segments.map((s) => s.fraction)).toEqual([3 / 7, 2 / 7, 2 / 7]);
  });

  it("invalid votes dilute the fractions", () => {
    const withInvalid = { ...item, invalid_count: 3, tally_counts: { AF: 3, "Non-AF": 1 } };
    const segments = tallySegments(withInvalid, ["AF", "Non-AF", "Uncertain"]);
    expect(segments[0].fraction).toBeCloseTo(3 / 7);
    expect(segments[2].count).toBe(0);
  });

  it("plurality respects ties", () => {
    const tied = { ...item, tally_counts: { AF: 3, "Non-AF": 3, Uncertain: 1 } };
    expect(pluralityLabels(tied, ["AF", "Non-AF", "Uncertain"])).toEqual(["AF", "Non-AF"]);
  });

  it("agents voting off the plurality are flagged as suspects", () => {
    const flagged = disagreeingAgents(item, ["AF", "Non-AF", "Uncertain"]);
    // plurality is AF (3 votes); the 2 Non-AF and 2 Uncertain voters disagree
    expect(flagged.size).toBe(4);
    expect([...flagged].every((id) => !id.includes("agent-AF"))).toBe(true);
  });

  it("one keyboard shortcut per label, in server order", () => {
    const map = shortcutMap(["AF", "Non-AF", "Uncertain"]);
    expect(map.get("1")).toBe("AF");
    expect(map.get("2")).toBe("Non-AF");
    expect(map.get("3")).toBe("Uncertain");
  });
});

describe("ConsoleApp", () => {
  it("init pulls labels and the pending queue from the server", async () => {
    const server = new FakeReviewServer();
    server.seed(5);
    const app = consoleOver(server);
    await app.init();
    expect(app.validLabels).toEqual(["AF", "Non-AF", "Uncertain"]);
    expect(app.state.items).toHaveLength(5);
    expect(app.state.current?.case_id).toBe("c0");
    expect(app.progress()).toEqual({ adjudicated: 0, total: 5 });
  });

  it("adjudicating all five via shortcuts drives progress to 5/5", async () => {
    const server = new FakeReviewServer();
    server.seed(5);
    const app = consoleOver(server);
    await app.init();
    for (let i = 0; i < 5; i++) {
      expect(app.state.current).not.toBeNull();
      const consumed = await app.handleKey("1"); // first label = AF
      expect(consumed).toBe(true);
    }
    expect(app.progress()).toEqual({ adjudicated: 5, total: 5 });
    expect(app.state.current).toBeNull();
    expect(app.state.banner).toBeNull();

    const csv = await new ReviewApi("", server.fetch).exportCsv();
    const humanRows = csv.split("\r\n").filter((line) => line.includes("human_review"));
    expect(humanRows).toHaveLength(5);
  });

  it("submission advances to the next pending case", async () => {
    const server = new FakeReviewServer();
    server.seed(3);
    const app = consoleOver(server);
    await app.init();
    await app.adjudicate("Non-AF");
    expect(app.state.current?.case_id).toBe("c1");
    expect(server.items.get("c0")?.human_label).toBe("Non-AF");
  });

  it("double submit from a second session surfaces the conflict banner", async () => {
    const server = new FakeReviewServer();
    server.seed(2);
    const sessionA = consoleOver(server);
    const sessionB = consoleOver(server);
    await sessionA.init();
    await sessionB.init();

    await sessionA.adjudicate("AF");          // both sessions sit on c0
    await sessionB.adjudicate("Non-AF");      // stale submit
    expect(sessionB.state.banner?.kind).toBe("conflict");
    expect(sessionB.state.banner?.message).toContain("re-open");
    expect(server.items.get("c0")?.human_label).toBe("AF"); // first write won

    await sessionB.reopenCurrent();           // explicit re-open, then relabel
    expect(sessionB.state.banner).toBeNull();
    await sessionB.adjudicate("Non-AF");
    expect(server.items.get("c0")?.human_label).toBe("Non-AF");
  });

  it("network failure shows a retry banner and loses nothing", async () => {
    const server = new FakeReviewServer();
    server.seed(2);
    const app = consoleOver(server);
    await app.init();

    server.failNextRequests = 1;
    await app.adjudicate("AF");
    expect(app.state.banner?.kind).toBe("network");
    expect(server.items.get("c0")?.status).toBe("pending"); // nothing saved

    await app.state.banner?.retry?.();
    expect(app.state.banner).toBeNull();
    expect(server.items.get("c0")?.status).toBe("adjudicated");
    expect(app.progress().adjudicated).toBe(1);
  });

  it("skip cycles through pending cases without touching the server", async () => {
    const server = new FakeReviewServer();
    server.seed(3);
    const app = consoleOver(server);
    await app.init();
    app.skip();
    expect(app.state.current?.case_id).toBe("c1");
    app.skip();
    expect(app.state.current?.case_id).toBe("c2");
    app.skip();
    expect(app.state.current?.case_id).toBe("c0");
    expect(server.items.get("c0")?.status).toBe("pending");
  });

  it("filters and pagination are server-driven", async () => {
    const server = new FakeReviewServer();
    server.seed(60);
    const app = consoleOver(server);
    await app.init();
    expect(app.state.items).toHaveLength(25); // default page size
    await app.goToPage(3);
    expect(app.state.items).toHaveLength(10);
    await app.setFilter("all", "Uncertain");
    expect(app.state.items.every((i) => i.machine_outcome === "Uncertain")).toBe(true);
  });

  it("progress matches server stats after refresh", async () => {
    const server = new FakeReviewServer();
    server.seed(4);
    const app = consoleOver(server);
    await app.init();
    // another session adjudicates two cases behind our back
    const other = new ReviewApi("", server.fetch);
    await other.adjudicate("c2", "AF", "other");
    await other.adjudicate("c3", "AF", "other");
    await app.refresh();
    expect(app.progress()).toEqual({ adjudicated: 2, total: 4 });
  });

  it("unknown keys are not consumed", async () => {
    const server = new FakeReviewServer();
    server.seed(1);
    const app = consoleOver(server);
    await app.init();
    expect(await app.handleKey("z")).toBe(false);
    expect(await app.handleKey("9")).toBe(false); // only 3 labels
  });
});
