import init, { DemoSession, locate } from "./pkg/dcc_wasm_demo.js";

const REGION_COLORS = {
  hard_to_learn: "#c33",
  ambiguous: "#d80",
  easy_to_learn: "#39c",
  other: "#999",
};

const canvas = document.getElementById("map");
const ctx = canvas.getContext("2d");
const tooltip = document.getElementById("tooltip");
const pad = { left: 48, right: 12, top: 12, bottom: 36 };

let session = null;
let points = [];
let selected = null;
let locatedPoint = null;

const px = (v) => pad.left + (v / 0.5) * (canvas.width - pad.left - pad.right);
const py = (c) => canvas.height - pad.bottom - c * (canvas.height - pad.top - pad.bottom);

function marker(x, y, label, r) {
  ctx.beginPath();
  if (label === "entailment") {
    ctx.arc(x, y, r, 0, 2 * Math.PI);
  } else if (label === "neutral") {
    ctx.moveTo(x, y - r * 1.2);
    ctx.lineTo(x + r * 1.1, y + r * 0.8);
    ctx.lineTo(x - r * 1.1, y + r * 0.8);
    ctx.closePath();
  } else {
    ctx.rect(x - r, y - r, 2 * r, 2 * r);
  }
}

function drawAxes() {
  ctx.strokeStyle = "#888";
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.beginPath();
  ctx.moveTo(pad.left, pad.top);
  ctx.lineTo(pad.left, canvas.height - pad.bottom);
  ctx.lineTo(canvas.width - pad.right, canvas.height - pad.bottom);
  ctx.stroke();
  for (let i = 0; i <= 5; i++) {
    const v = i * 0.1;
    ctx.fillText(v.toFixed(1), px(v) - 8, canvas.height - pad.bottom + 14);
    const c = i * 0.2;
    ctx.fillText(c.toFixed(1), pad.left - 28, py(c) + 4);
  }
  ctx.fillText("variability", canvas.width / 2 - 25, canvas.height - 6);
  ctx.save();
  ctx.translate(12, canvas.height / 2 + 25);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText("confidence", 0, 0);
  ctx.restore();
}

function draw() {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  drawAxes();
  const neighborIds = new Set(selected ? [...selected.different_label, ...selected.same_label].map((n) => n.id) : []);
  for (const p of points) {
    if (p.is_dcc) continue;
    ctx.globalAlpha = selected && !neighborIds.has(p.id) ? 0.25 : 0.7;
    ctx.fillStyle = REGION_COLORS[p.region];
    marker(px(p.variability), py(p.confidence), p.label, 3);
    ctx.fill();
  }
  ctx.globalAlpha = 1;
  for (const p of points.filter((q) => q.is_dcc)) {
    const isSelected = selected && selected.id === p.id;
    ctx.fillStyle = isSelected ? "#000" : REGION_COLORS[p.region];
    ctx.strokeStyle = "#000";
    ctx.lineWidth = isSelected ? 2.5 : 1.5;
    marker(px(p.variability), py(p.confidence), p.label, isSelected ? 7 : 5);
    ctx.fill();
    ctx.stroke();
  }
  if (locatedPoint) {
    ctx.strokeStyle = "#6a0dad";
    ctx.lineWidth = 2;
    ctx.beginPath();
    const x = px(locatedPoint.variability);
    const y = py(locatedPoint.confidence);
    ctx.moveTo(x - 7, y - 7);
    ctx.lineTo(x + 7, y + 7);
    ctx.moveTo(x + 7, y - 7);
    ctx.lineTo(x - 7, y + 7);
    ctx.stroke();
  }
  ctx.lineWidth = 1;
}

function nearest(event, onlyDccs) {
  const rect = canvas.getBoundingClientRect();
  const mx = event.clientX - rect.left;
  const my = event.clientY - rect.top;
  let best = null;
  let bestDist = 100;
  for (const p of points) {
    if (onlyDccs && !p.is_dcc) continue;
    const d = (px(p.variability) - mx) ** 2 + (py(p.confidence) - my) ** 2;
    if (d < bestDist) {
      best = p;
      bestDist = d;
    }
  }
  return best;
}

function escapeHtml(s) {
  return s.replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}

function neighborTable(title, rows) {
  if (rows.length === 0) return `<h2>${title}</h2><p>None.</p>`;
  const body = rows
    .map(
      (n) => `<tr><td>${n.id}</td><td>${n.similarity.toFixed(4)}</td><td>${n.label}</td>` +
        `<td>${escapeHtml(n.premise)}<br><i>${escapeHtml(n.hypothesis)}</i></td></tr>`,
    )
    .join("");
  return `<h2>${title}</h2><table><tr><th>id</th><th>cosine</th><th>label</th><th>text</th></tr>${body}</table>`;
}

function showDcc(id) {
  const detail = document.getElementById("detail");
  try {
    selected = JSON.parse(session.dcc(id));
  } catch (e) {
    detail.innerHTML = `<h2>DCC detail</h2><p class="error">${escapeHtml(String(e))}</p>`;
    return;
  }
  const d = selected;
  const prompt = d.prompt
    ? `<h2>Few-shot prompt</h2><pre>${escapeHtml(d.prompt)}</pre><small>sha256 ${d.prompt_fingerprint}</small>`
    : `<p class="error">${escapeHtml(d.prompt_error)}</p>`;
  detail.innerHTML =
    `<h2>DCC ${d.id} (${d.label}, ${d.region.replaceAll("_", " ")})</h2>` +
    `<p>${escapeHtml(d.premise)}<br><i>${escapeHtml(d.hypothesis)}</i></p>` +
    `<p>confidence ${d.confidence.toFixed(3)}, variability ${d.variability.toFixed(3)}, ` +
    `annotations: ${d.annotations.join(", ")}</p>` +
    neighborTable("Nearest neighbors with a different label", d.different_label) +
    neighborTable("Nearest neighbors with the same label", d.same_label) +
    prompt;
  draw();
}

function generate() {
  const status = document.getElementById("status");
  const seed = Number(document.getElementById("seed").value);
  const n = Number(document.getElementById("n").value);
  const sim = Number(document.getElementById("sim").value);
  const started = performance.now();
  try {
    session?.free();
    session = new DemoSession(seed, n, sim);
  } catch (e) {
    status.innerHTML = `<span class="error">${escapeHtml(String(e))}</span>`;
    return;
  }
  points = JSON.parse(session.dataMap());
  selected = null;
  document.getElementById("detail").innerHTML = "<h2>DCC detail</h2><p>No DCC selected.</p>";
  const dccs = points.filter((p) => p.is_dcc).length;
  status.textContent = `${points.length} points, ${dccs} DCCs, ${(performance.now() - started).toFixed(0)} ms`;
  draw();
}

canvas.addEventListener("click", (event) => {
  const p = nearest(event, true);
  if (p) showDcc(p.id);
});

canvas.addEventListener("mousemove", (event) => {
  const p = nearest(event, false);
  if (!p) {
    tooltip.style.display = "none";
    return;
  }
  tooltip.innerHTML = `<b>${p.id}</b> ${p.label}${p.is_dcc ? " (DCC)" : ""}<br>` +
    `${escapeHtml(p.premise)}<br><i>${escapeHtml(p.hypothesis)}</i>`;
  tooltip.style.left = `${event.clientX + 14}px`;
  tooltip.style.top = `${event.clientY + 10}px`;
  tooltip.style.display = "block";
});
canvas.addEventListener("mouseleave", () => (tooltip.style.display = "none"));

document.getElementById("generate").addEventListener("click", generate);
document.getElementById("locate").addEventListener("click", () => {
  const out = document.getElementById("located");
  try {
    locatedPoint = JSON.parse(locate(document.getElementById("series").value));
    out.textContent = `confidence ${locatedPoint.confidence.toFixed(4)}, variability ` +
      `${locatedPoint.variability.toFixed(4)}: ${locatedPoint.region.replaceAll("_", " ")}`;
  } catch (e) {
    locatedPoint = null;
    out.innerHTML = `<span class="error">${escapeHtml(String(e))}</span>`;
  }
  draw();
});

await init();
generate();
