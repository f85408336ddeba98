// Built with: wasm-pack build crates/wasm --target web --out-dir www/pkg
import init, { lookdownTrajectory, directPaths, genealogyNewick } from "./pkg/lookdown_wasm.js";

const $ = (id) => document.getElementById(id);

function showError(e) {
  $("error").textContent = e ? String(e) : "";
}

function plot(canvas, series, colors) {
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  let xmax = 0, ymax = 0;
  for (const s of series) {
    for (const [x, y] of s) {
      xmax = Math.max(xmax, x);
      ymax = Math.max(ymax, y);
    }
  }
  if (xmax === 0 || ymax === 0) return;
  const pad = 30;
  const sx = (x) => pad + (x / xmax) * (width - 2 * pad);
  const sy = (y) => height - pad - (y / ymax) * (height - 2 * pad);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, width - 2 * pad, height - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.fillText(ymax.toPrecision(3), 2, pad);
  ctx.fillText(xmax.toPrecision(3), width - pad - 10, height - 10);
  series.forEach((s, i) => {
    ctx.strokeStyle = colors[i % colors.length];
    ctx.beginPath();
    s.forEach(([x, y], k) => (k ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    ctx.stroke();
  });
}

function runTrajectory() {
  showError();
  try {
    const pts = JSON.parse(lookdownTrajectory($("run").value, 400));
    plot($("traj"), [pts.map((p) => [p.t, p.xi_a]), pts.map((p) => [p.t, p.xi_b])], ["#c33", "#36c"]);
  } catch (e) {
    showError(e);
  }
}

function runDirect() {
  showError();
  try {
    const p = JSON.parse(directPaths($("direct").value, Number($("replicas").value), BigInt($("seed").value), 400));
    const series = [];
    for (let r = 0; r < p.t.length; r++) {
      series.push(p.t[r].map((t, k) => [t, p.xi_a[r][k]]));
      series.push(p.t[r].map((t, k) => [t, p.xi_b[r][k]]));
    }
    plot($("paths"), series, ["rgba(200,50,50,0.5)", "rgba(50,100,200,0.5)"]);
  } catch (e) {
    showError(e);
  }
}

function runTree() {
  showError();
  try {
    $("newick").textContent = genealogyNewick($("run").value);
  } catch (e) {
    showError(e);
  }
}

await init();
$("go-traj").onclick = runTrajectory;
$("go-direct").onclick = runDirect;
$("go-tree").onclick = runTree;
runTrajectory();
