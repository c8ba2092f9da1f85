import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { main } from "../src/cli.js";

const FIXTURES = join(__dirname, "fixtures");
const GOLDEN = join(FIXTURES, "golden.csv");
const GOLDEN_B = join(FIXTURES, "golden_b.csv");

let dir: string;
let stderrSpy: ReturnType<typeof vi.spyOn>;

beforeEach(() => {
  dir = mkdtempSync(join(tmpdir(), "plotkit-"));
  stderrSpy = vi.spyOn(process.stderr, "write").mockReturnValue(true);
  vi.spyOn(process.stdout, "write").mockReturnValue(true);
});

afterEach(() => {
  vi.restoreAllMocks();
});

function stderrText(): string {
  return stderrSpy.mock.calls.map((c) => String(c[0])).join("");
}

function countSeries(path: string): number {
  const svg = readFileSync(path, "utf-8");
  return (svg.match(/<g class="series"/g) ?? []).length;
}

describe("render command", () => {
  it("renders a curve figure from the golden table", () => {
    const out = join(dir, "curve.svg");
    const code = main(["render", "--kind", "curve", "--in", GOLDEN, "--out", out]);
    expect(code).toBe(0);
    expect(countSeries(out)).toBe(3);
    const svg = readFileSync(out, "utf-8");
    expect(svg).toContain("P_m [dBW]");
    expect(svg).toContain(">WSEE<");
  });

  it("renders a histogram", () => {
    const out = join(dir, "hist.svg");
    const code = main([
      "render", "--kind", "histogram", "--in", GOLDEN, "--out", out,
    ]);
    expect(code).toBe(0);
    expect(countSeries(out)).toBe(3);
  });

  it("filters methods", () => {
    const out = join(dir, "two.svg");
    const code = main([
      "render", "--kind", "curve", "--in", GOLDEN, "--out", out,
      "--methods", "sca,max-pow",
    ]);
    expect(code).toBe(0);
    expect(countSeries(out)).toBe(2);
  });

  it("overlays labeled series from several tables", () => {
    const out = join(dir, "miles.svg");
    const code = main([
      "render", "--kind", "milestones",
      "--in", GOLDEN, "--in", GOLDEN_B, "--out", out,
    ]);
    expect(code).toBe(0);
    expect(countSeries(out)).toBe(5);
    const svg = readFileSync(out, "utf-8");
    expect(svg).toContain('data-name="golden:sca"');
    expect(svg).toContain('data-name="golden_b:usca"');
  });

  it("renders grouped transfer bars", () => {
    const out = join(dir, "bars.svg");
    const code = main([
      "render", "--kind", "finetune-bars",
      "--in", GOLDEN, "--in", GOLDEN_B, "--out", out,
    ]);
    expect(code).toBe(0);
    expect(countSeries(out)).toBe(2);
  });

  it("writes identical bytes on repeated runs", () => {
    const a = join(dir, "a.svg");
    const b = join(dir, "b.svg");
    main(["render", "--kind", "curve", "--in", GOLDEN, "--out", a]);
    main(["render", "--kind", "curve", "--in", GOLDEN, "--out", b]);
    expect(readFileSync(a, "utf-8")).toBe(readFileSync(b, "utf-8"));
  });
});

describe("failure modes", () => {
  it("exits 2 on a schema mismatch and names the offending column", () => {
    const bad = join(dir, "bad.csv");
    const text = readFileSync(GOLDEN, "utf-8").replace("pm_dbw", "power_dbw");
    writeFileSync(bad, text);
    const code = main([
      "render", "--kind", "curve", "--in", bad, "--out", join(dir, "x.svg"),
    ]);
    expect(code).toBe(2);
    expect(stderrText()).toMatch(/missing columns: pm_dbw/);
  });

  it("exits 2 on a missing version line", () => {
    const bad = join(dir, "bad2.csv");
    const text = readFileSync(GOLDEN, "utf-8").split("\n").slice(1).join("\n");
    writeFileSync(bad, text);
    const code = main([
      "render", "--kind", "curve", "--in", bad, "--out", join(dir, "x.svg"),
    ]);
    expect(code).toBe(2);
    expect(stderrText()).toMatch(/wsee-results v1/);
  });

  it("exits 1 when curve is given several tables", () => {
    const code = main([
      "render", "--kind", "curve",
      "--in", GOLDEN, "--in", GOLDEN_B, "--out", join(dir, "x.svg"),
    ]);
    expect(code).toBe(1);
    expect(stderrText()).toMatch(/exactly one/);
  });

  it("exits 1 on an unknown kind", () => {
    const code = main([
      "render", "--kind", "pie", "--in", GOLDEN, "--out", join(dir, "x.svg"),
    ]);
    expect(code).toBe(1);
  });

  it("exits 1 when the filter matches nothing", () => {
    const code = main([
      "render", "--kind", "curve", "--in", GOLDEN, "--out", join(dir, "x.svg"),
      "--methods", "oracle",
    ]);
    expect(code).toBe(1);
    expect(stderrText()).toMatch(/matches nothing/);
  });

  it("exits 1 on a missing input file", () => {
    const code = main([
      "render", "--kind", "curve",
      "--in", join(dir, "absent.csv"), "--out", join(dir, "x.svg"),
    ]);
    expect(code).toBe(1);
  });
});
