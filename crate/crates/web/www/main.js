import init, { maskPreview, simulateSlice, reconstructSlice } from "./pkg/kiqt_web.js";

const $ = (id) => document.getElementById(id);
let checkpoint = null;

function draw(id, img) {
  const canvas = $(id);
  canvas.width = img.width;
  canvas.height = img.height;
  const data = new ImageData(new Uint8ClampedArray(img.rgba()), img.width, img.height);
  canvas.getContext("2d").putImageData(data, 0, 0);
}

function params() {
  return {
    pattern: $("pattern").value,
    rate: Number($("rate").value),
    size: Number($("size").value),
    seed: Number($("seed").value) >>> 0,
    noise: Number($("noise").value),
  };
}

function guarded(fn) {
  return () => {
    $("status").textContent = "";
    try {
      fn();
    } catch (e) {
      $("status").textContent = e.message ?? String(e);
    }
  };
}

const metrics = (v) => `SSIM ${v.ssim.toFixed(4)}, PSNR ${v.psnr.toFixed(2)} dB`;

const updateMask = guarded(() => {
  const p = params();
  $("rate-out").textContent = p.rate.toFixed(2);
  const m = maskPreview(p.pattern, p.rate, p.size, p.seed);
  draw("mask", m.image);
  $("mask-info").textContent = `${m.samples} samples, rate ${m.achieved_rate.toFixed(4)}`;
});

const simulate = guarded(() => {
  const p = params();
  const v = simulateSlice(p.seed, p.size, p.pattern, p.rate, p.noise);
  draw("zf-ref", v.reference);
  draw("zf-k", v.kspace);
  draw("zf-recon", v.recon);
  draw("zf-err", v.error);
  $("zf-metrics").textContent = metrics(v);
});

const reconstruct = guarded(() => {
  const p = params();
  const v = reconstructSlice(checkpoint, p.seed, p.size, p.pattern, p.rate, p.noise);
  draw("net-recon", v.recon);
  draw("net-err", v.error);
  $("net-metrics").textContent = metrics(v);
});

await init();
for (const id of ["pattern", "rate", "size", "seed"]) {
  $(id).addEventListener("input", updateMask);
}
$("simulate").addEventListener("click", simulate);
$("reconstruct").addEventListener("click", reconstruct);
$("ckpt").addEventListener("change", async (e) => {
  const file = e.target.files[0];
  checkpoint = file ? new Uint8Array(await file.arrayBuffer()) : null;
  $("reconstruct").disabled = checkpoint === null;
});
updateMask();
simulate();
