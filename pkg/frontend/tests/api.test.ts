import { describe, expect, it } from "vitest";

import { ApiError, ConflictError, ReviewApi } from "../src/api.js";
import { FakeReviewServer } from "./fakeServer.js";

function apiOver(server: FakeReviewServer): ReviewApi {
  return new ReviewApi("", server.fetch);
}

describe("ReviewApi", () => {
  it("serializes queue filters and pagination", async () => {
    const seen: string[] = [];
    const server = new FakeReviewServer();
    server.seed(3);
    const api = new ReviewApi("", (input, init) => {
      seen.push(input);
      return server.fetch(input, init);
    });
    await api.queue({ status: "pending", machine_outcome: "Review", page: 2, page_size: 10 });
    expect(seen[0]).toBe("/api/queue?status=pending&machine_outcome=Review&page=2&page_size=10");
  });

  it("returns typed queue pages", async () => {
    const server = new FakeReviewServer();
    server.seed(5);
    const page = await apiOver(server).queue({ page: 1, page_size: 2 });
    expect(page.total).toBe(5);
    expect(page.items.map((i) => i.case_id)).toEqual(["c0", "c1"]);
  });

  it("maps 404 onto ApiError with the server detail", async () => {
    const server = new FakeReviewServer();
    await expect(apiOver(server).case("ghost")).rejects.toMatchObject({
      status: 404,
      error: "not_found",
      detail: "no review item for case 'ghost'",
    });
    await expect(apiOver(server).case("ghost")).rejects.toBeInstanceOf(ApiError);
  });

  it("maps 409 onto ConflictError", async () => {
    const server = new FakeReviewServer();
    server.seed(1);
    const api = apiOver(server);
    await api.adjudicate("c0", "AF", "dr_a");
    await expect(api.adjudicate("c0", "Non-AF", "dr_b")).rejects.toBeInstanceOf(ConflictError);
  });

  it("maps 422 onto plain ApiError", async () => {
    const server = new FakeReviewServer();
    server.seed(1);
    await expect(apiOver(server).adjudicate("c0", "Review", "dr")).rejects.toMatchObject({
      status: 422,
      error: "validation",
    });
  });

  it("adjudicate round-trips the updated item", async () => {
    const server = new FakeReviewServer();
    server.seed(1);
    const item = await apiOver(server).adjudicate("c0", "AF", "dr_a");
    expect(item.status).toBe("adjudicated");
    expect(item.human_label).toBe("AF");
  });

  it("sends the static token header when configured", async () => {
    const server = new FakeReviewServer();
    server.seed(1);
    let headers: Record<string, string> | undefined;
    const api = new ReviewApi("", (input, init) => {
      headers = init?.headers as Record<string, string>;
      return server.fetch(input, init);
    }, "sekrit");
    await api.stats();
    expect(headers?.["X-Review-Token"]).toBe("sekrit");
  });
});
