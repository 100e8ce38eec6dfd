import init, { partition, transport, geodesic } from "./pkg/sdot_geodesic_demo.js";

const $ = (id) => document.getElementById(id);

// World coordinates [-1.05, 1.05]² (disk) or [-0.55, 0.55]² (square) to canvas pixels.
function viewFor(canvas, shape) {
  const half = shape === "disk" ? 1.05 : 0.55;
  const s = canvas.width / (2 * half);
  return {
    px: ([x, y]) => [(x + half) * s, canvas.height - (y + half) * s],
    world: (cx, cy) => [cx / s - half, (canvas.height - cy) / s - half],
    scale: s,
  };
}

function polygon(ctx, view, pts, fill, stroke) {
  ctx.beginPath();
  pts.forEach((p, i) => {
    const [x, y] = view.px(p);
    if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
  });
  ctx.closePath();
  if (fill) { ctx.fillStyle = fill; ctx.fill(); }
  if (stroke) { ctx.strokeStyle = stroke; ctx.stroke(); }
}

function dot(ctx, view, p, r, fill, stroke) {
  const [x, y] = view.px(p);
  ctx.beginPath();
  ctx.arc(x, y, r, 0, 2 * Math.PI);
  if (fill) { ctx.fillStyle = fill; ctx.fill(); }
  if (stroke) { ctx.strokeStyle = stroke; ctx.stroke(); }
}

function hueColor([x, y], reach) {
  const h = ((Math.atan2(y, x) * 180) / Math.PI + 360) % 360;
  const s = Math.min(Math.hypot(x, y) / reach, 1) * 100;
  return `hsl(${h.toFixed(1)}, ${s.toFixed(1)}%, ${(92 - s * 0.42).toFixed(1)}%)`;
}

function report(id, text, isError = false) {
  const el = $(id);
  el.textContent = text;
  el.classList.toggle("error", isError);
}

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

// Equal-area partition --------------------------------------------------------

function runPartition() {
  const shape = $("partition-shape").value;
  const n = Number($("partition-n").value);
  const canvas = $("partition-canvas");
  const ctx = clear(canvas);
  const view = viewFor(canvas, shape);
  try {
    const v = JSON.parse(partition(shape, n));
    const reach = shape === "disk" ? 1 : Math.SQRT1_2;
    v.regions.forEach((r, j) => polygon(ctx, view, r, hueColor(v.barycenters[j], reach), "#555"));
    v.barycenters.forEach((b) => dot(ctx, view, b, 2, "#000"));
    report("partition-out", `${v.regions.length} regions of area ${(1 / v.regions.length).toPrecision(6)} (normalized)`);
  } catch (e) {
    report("partition-out", String(e.message ?? e), true);
  }
}

// Laguerre cells --------------------------------------------------------------

let points = [];

function runTransport() {
  const shape = $("transport-shape").value;
  const canvas = $("transport-canvas");
  const ctx = clear(canvas);
  const view = viewFor(canvas, shape);
  if (points.length === 0) {
    report("transport-out", "no points yet");
    return;
  }
  try {
    const v = JSON.parse(transport(shape, new Float64Array(points.flat())));
    v.cells.forEach((c, j) => polygon(ctx, view, c, `hsl(${(j * 47) % 360}, 55%, 85%)`, "#444"));
    points.forEach((p, j) => {
      const [x0, y0] = view.px(p);
      const [x1, y1] = view.px(v.barycenters[j]);
      ctx.strokeStyle = "#999";
      ctx.beginPath(); ctx.moveTo(x0, y0); ctx.lineTo(x1, y1); ctx.stroke();
      dot(ctx, view, p, 3, "#000");
      dot(ctx, view, v.barycenters[j], 3, null, "#d62728");
    });
    report("transport-out", `N = ${points.length}\ncost = ${v.cost.toExponential(6)}\nNewton steps = ${v.newton_iterations}`);
  } catch (e) {
    report("transport-out", String(e.message ?? e), true);
  }
}

function randomPoints() {
  const shape = $("transport-shape").value;
  points = [];
  while (points.length < 20) {
    const x = Math.random() - 0.5;
    const y = Math.random() - 0.5;
    if (shape === "square") points.push([x, y]);
    else points.push([1.6 * x, 1.6 * y]);
  }
  runTransport();
}

// Generalized geodesic --------------------------------------------------------

let solution = null;

function drawGeodesic() {
  if (!solution) return;
  const canvas = $("geodesic-canvas");
  const ctx = clear(canvas);
  const shape = solution.flow === "disk_rotation" ? "disk" : "square";
  const view = viewFor(canvas, shape);
  const reach = shape === "disk" ? 1 : Math.SQRT1_2;
  polygon(ctx, view, solution.outline, "#f7f7f7", "#333");
  const frames = solution.frames;
  const i = Math.min(Number($("geodesic-time").value), frames.length - 1);
  const colors = frames[0].map((p) => hueColor(p, reach));
  if ($("geodesic-paths").checked) {
    ctx.lineWidth = 0.8;
    colors.forEach((c, j) => {
      ctx.strokeStyle = c;
      ctx.beginPath();
      frames.forEach((f, k) => {
        const [x, y] = view.px(f[j]);
        if (k === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
      });
      ctx.stroke();
    });
  }
  const r = Math.max(2, Math.min(6, 60 / Math.sqrt(frames[0].length)));
  frames[i].forEach((p, j) => dot(ctx, view, p, r, colors[j], "#333"));
}

function runGeodesic() {
  const flow = $("geodesic-flow").value;
  const tmax = Number($("geodesic-tmax").value);
  const n = Number($("geodesic-n").value);
  const t = Number($("geodesic-t").value);
  report("geodesic-out", "solving...");
  // let the status line paint before the solver blocks the thread
  setTimeout(() => {
    const started = performance.now();
    try {
      solution = { ...JSON.parse(geodesic(flow, tmax, n, t, 1)), flow };
      const slider = $("geodesic-time");
      slider.max = String(t);
      slider.value = "0";
      drawGeodesic();
      report(
        "geodesic-out",
        `E = ${solution.energy.toFixed(6)}   E' = ${solution.e_prime.toFixed(6)}   kinetic = ${solution.kinetic.toFixed(6)}\n` +
          `classical regime: ${solution.classical_threshold}   converged: ${solution.converged}\n` +
          `${((performance.now() - started) / 1000).toFixed(2)} s`,
      );
    } catch (e) {
      report("geodesic-out", String(e.message ?? e), true);
    }
  }, 20);
}

// Wiring ----------------------------------------------------------------------

await init();

$("partition-run").addEventListener("click", runPartition);
$("partition-shape").addEventListener("change", runPartition);

$("transport-canvas").addEventListener("click", (ev) => {
  const canvas = $("transport-canvas");
  const rect = canvas.getBoundingClientRect();
  const view = viewFor(canvas, $("transport-shape").value);
  points.push(view.world(ev.clientX - rect.left, ev.clientY - rect.top));
  runTransport();
});
$("transport-random").addEventListener("click", randomPoints);
$("transport-clear").addEventListener("click", () => { points = []; runTransport(); });
$("transport-shape").addEventListener("change", () => { points = []; runTransport(); });

$("geodesic-run").addEventListener("click", runGeodesic);
$("geodesic-time").addEventListener("input", drawGeodesic);
$("geodesic-paths").addEventListener("change", drawGeodesic);

runPartition();
randomPoints();
