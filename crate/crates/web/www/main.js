import init, { simulate, fit_q, spectral_fit } from "./pkg/cuthmm_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
let y = null;

function report(fn) {
  return () => {
    $("status").textContent = "";
    try {
      fn();
    } catch (e) {
      $("status").textContent = String(e.message ?? e);
    }
  };
}

function table(rows, caption) {
  const body = rows
    .map((r, i) => `<tr><th>${i}</th>${r.map((v) => `<td>${v}</td>`).join("")}</tr>`)
    .join("");
  return `<table><caption>${caption}</caption><tr><th></th><th>0</th><th>1</th></tr>${body}</table>`;
}

function drawSeries(canvas, ys, xs) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const shown = Math.min(ys.length, 500);
  const lo = -4, hi = 4;
  const px = (t) => (t / (shown - 1)) * w;
  const py = (v) => h - ((Math.max(lo, Math.min(hi, v)) - lo) / (hi - lo)) * h;
  for (let t = 0; t < shown; t++) {
    ctx.fillStyle = xs[t] === 0 ? "rgba(40,90,200,0.12)" : "rgba(220,80,40,0.12)";
    ctx.fillRect(px(t), 0, w / shown + 1, h);
  }
  ctx.strokeStyle = "#222";
  ctx.beginPath();
  for (let t = 0; t < shown; t++) {
    t === 0 ? ctx.moveTo(px(t), py(ys[t])) : ctx.lineTo(px(t), py(ys[t]));
  }
  ctx.stroke();
  ctx.fillStyle = "#222";
  ctx.fillText(`first ${shown} of ${ys.length} observations; shading marks the hidden state`, 6, 12);
}

function drawHistograms(canvas, samples, truths) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const colours = ["40,90,200", "220,80,40"];
  const bins = 60;
  const counts = samples.map((s) => {
    const c = new Array(bins).fill(0);
    s.forEach((v) => c[Math.min(bins - 1, Math.floor(v * bins))]++);
    return c;
  });
  const top = Math.max(...counts.flat());
  counts.forEach((c, k) => {
    ctx.fillStyle = `rgba(${colours[k]},0.5)`;
    c.forEach((v, b) => ctx.fillRect((b / bins) * w, h - (v / top) * (h - 20), w / bins - 1, (v / top) * (h - 20)));
    ctx.strokeStyle = `rgb(${colours[k]})`;
    ctx.beginPath();
    ctx.moveTo(truths[k] * w, 0);
    ctx.lineTo(truths[k] * w, h);
    ctx.stroke();
  });
  ctx.fillStyle = "#222";
  ctx.fillText("posterior draws of Q00 (blue) and Q11 (orange) on [0, 1]; lines mark the simulated values", 6, 12);
}

const fmt = (m) => m.map((r) => r.map((v) => v.toFixed(3)));

await init();
$("simulate").onclick = report(() => {
  const sim = JSON.parse(simulate(num("n"), num("q00"), num("q11"), BigInt(num("seed"))));
  y = Float64Array.from(sim.y);
  drawSeries($("series"), sim.y, sim.x);
  $("fit").disabled = false;
  $("spectral").disabled = false;
});
$("fit").onclick = report(() => {
  const fit = JSON.parse(fit_q(y, num("m"), num("iterations"), BigInt(num("seed"))));
  const cells = fit.mean.map((r, i) => r.map((v, j) => `${v.toFixed(3)} ± ${fit.sd[i][j].toFixed(3)}`));
  $("q-table").innerHTML = table(cells, `posterior mean ± sd, κ = ${fit.kappa}`);
  drawHistograms($("posterior"), fit.diagonal, [num("q00"), num("q11")]);
});
$("spectral").onclick = report(() => {
  const est = JSON.parse(spectral_fit(y, num("m-spectral"), BigInt(num("seed"))));
  $("spectral-table").innerHTML = table(fmt(est.q_hat), "spectral Q̂");
});
