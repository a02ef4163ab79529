import init, { SceneExplorer, heatmap_target, heatmap_side } from "./pkg/csgaze_wasm_demo.js";

const SIZE = 224;
const $ = (id) => document.getElementById(id);

let explorer = null;
let clicked = null;

function draw() {
  const ctx = $("scene").getContext("2d");
  const rgba = explorer.render_rgba(SIZE);
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), SIZE, SIZE), 0, 0);

  const s = JSON.parse(explorer.summary_json());
  // Gaze targets (nearest disc on each ray) as small rings.
  s.gaze_points.forEach((p, who) => {
    if (!p) return;
    ctx.strokeStyle = who === 0 ? "#1b7f3a" : "#c2337a";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.arc(p[0] * SIZE, p[1] * SIZE, 5, 0, 2 * Math.PI);
    ctx.stroke();
  });
  if (clicked) {
    ctx.fillStyle = "#000";
    ctx.fillRect(clicked[0] * SIZE - 2, clicked[1] * SIZE - 2, 4, 4);
  }

  $("label").textContent = s.label;
  $("swapped").textContent = s.swapped_label;
  const f = (b) => (b ? "yes" : "no");
  $("lah").textContent = `${f(s.pair_labels.lah_p_to_a)} / ${f(s.pair_labels.lah_a_to_p)}`;
  $("laeo").textContent = f(s.pair_labels.laeo);
  $("sa").textContent = f(s.pair_labels.sa);
  $("context").textContent = s.context;
  for (const who of [0, 1]) {
    $(`a${who}v`).textContent = Math.round(s.gaze_angles_deg[who]);
  }
}

function sample() {
  const seed = Math.max(0, parseInt($("seed").value, 10) || 0);
  try {
    explorer = new SceneExplorer(seed, parseInt($("cls").value, 10));
  } catch (e) {
    $("label").textContent = String(e);
    return;
  }
  for (const who of [0, 1]) {
    $(`a${who}`).value = Math.round(explorer.gaze_angle(who));
  }
  draw();
}

function showHeatmap(x, y) {
  const n = heatmap_side();
  const values = heatmap_target(x, y);
  if (values.length === 0) return;
  const peak = values.reduce((m, v) => Math.max(m, v), 0) || 1;
  const img = new ImageData(n, n);
  values.forEach((v, i) => {
    const t = v / peak;
    img.data[4 * i] = Math.round(255 * t);
    img.data[4 * i + 1] = Math.round(255 * t * t);
    img.data[4 * i + 2] = Math.round(80 * (1 - t));
    img.data[4 * i + 3] = 255;
  });
  $("heat").getContext("2d").putImageData(img, 0, 0);
  $("heatinfo").textContent = `gaze point (${x.toFixed(3)}, ${y.toFixed(3)})`;
}

await init();

$("sample").addEventListener("click", sample);
$("next").addEventListener("click", () => {
  $("seed").value = (parseInt($("seed").value, 10) || 0) + 1;
  sample();
});
$("cls").addEventListener("change", sample);
for (const who of [0, 1]) {
  $(`a${who}`).addEventListener("input", (e) => {
    explorer.set_gaze_angle(who, parseFloat(e.target.value));
    draw();
  });
}
$("scene").addEventListener("click", (e) => {
  const r = e.target.getBoundingClientRect();
  clicked = [(e.clientX - r.left) / r.width, (e.clientY - r.top) / r.height];
  showHeatmap(clicked[0], clicked[1]);
  draw();
});

sample();
