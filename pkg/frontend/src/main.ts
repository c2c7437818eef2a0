/** DOM bootstrap: input bindings, HUD, and the render-request loop. */

import { defaultSettings, drawFrame, stateFor, ViewerClient, ViewerSettings } from "./client.js";
import { AZIMUTH_STEPS, makeOrbit, OrbitState, rotate, zoom } from "./orbit.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function boot(): void {
  const canvas = el<HTMLCanvasElement>("view");
  const banner = el<HTMLDivElement>("banner");
  const stats = el<HTMLDivElement>("stats");
  const clipSlider = el<HTMLInputElement>("clip");
  const shellToggle = el<HTMLInputElement>("layer-shell");
  const coreToggle = el<HTMLInputElement>("layer-core");
  const playToggle = el<HTMLInputElement>("play");

  const settings: ViewerSettings = { ...defaultSettings };
  let orbit: OrbitState = makeOrbit(100);
  let sceneDiag = 100;
  let clockStart = performance.now();
  let dirty = true;

  const client = new ViewerClient(window.location.origin, {
    onInfo: (info) => {
      const lo = info.bounds.min;
      const hi = info.bounds.max;
      const center: [number, number, number] = [
        (lo[0] + hi[0]) / 2,
        (lo[1] + hi[1]) / 2,
        (lo[2] + hi[2]) / 2,
      ];
      sceneDiag = Math.hypot(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]) || 100;
      orbit = { ...makeOrbit(sceneDiag * 1.2, center) };
      stats.textContent =
        `${info.virtual_atom_count.toLocaleString()} virtual atoms | ` +
        `${info.molecules.length} molecule types | ` +
        `${(info.geometry_bytes / 1024).toFixed(0)} KiB resident geometry`;
      dirty = true;
    },
    onFrame: (frame) => drawFrame(canvas, frame),
    onStatus: (status, detail) => {
      banner.textContent = status === "error" ? `connection problem: ${detail} (retrying)` : "";
      banner.style.display = status === "error" ? "block" : "none";
    },
  });
  void client.connect();

  // pointer orbit: one full canvas width = one full turn
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("pointerdown", (e) => {
    dragging = true;
    lastX = e.clientX;
    lastY = e.clientY;
    canvas.setPointerCapture(e.pointerId);
  });
  canvas.addEventListener("pointermove", (e) => {
    if (!dragging) {
      return;
    }
    const dx = e.clientX - lastX;
    const dy = e.clientY - lastY;
    lastX = e.clientX;
    lastY = e.clientY;
    orbit = rotate(orbit, -Math.round((dx / canvas.clientWidth) * AZIMUTH_STEPS), dy * 0.005);
    dirty = true;
  });
  canvas.addEventListener("pointerup", () => {
    dragging = false;
  });
  canvas.addEventListener("wheel", (e) => {
    e.preventDefault();
    orbit = zoom(orbit, e.deltaY > 0 ? 1.12 : 1 / 1.12);
    dirty = true;
  });

  clipSlider.addEventListener("input", () => {
    const v = Number(clipSlider.value);
    // slider at the minimum disables the plane entirely
    settings.clipOffset = v <= Number(clipSlider.min) ? null : ((v / 100) - 0.5) * sceneDiag;
    dirty = true;
  });
  const updateMode = () => {
    const shell = shellToggle.checked;
    const core = coreToggle.checked;
    settings.mode = shell && core ? "both" : shell ? "shell" : "core";
    dirty = true;
  };
  shellToggle.addEventListener("change", updateMode);
  coreToggle.addEventListener("change", updateMode);
  playToggle.addEventListener("change", () => {
    settings.playing = playToggle.checked;
    clockStart = performance.now();
    dirty = true;
  });

  // one request per animation frame at most; the gate keeps it to one
  // in flight
  const tick = () => {
    if (dirty || settings.playing) {
      const time = settings.playing ? (performance.now() - clockStart) / 1000 : 0;
      client.request(stateFor(orbit, settings, time));
      dirty = false;
    }
    requestAnimationFrame(tick);
  };
  requestAnimationFrame(tick);
}

boot();
