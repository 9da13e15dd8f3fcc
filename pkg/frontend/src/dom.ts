/** DOM bindings: render the panel view-models into the page and wire inputs
 * back to control commands. Rendering overwrites values only on elements the
 * operator is not currently editing. */

import { renderPromptPanel, renderSignalPanel } from "./panels.js";
import { controlsEnabled, isStale, type UiStateModel } from "./state.js";
import type { ConsoleClient } from "./net.js";

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

function fmt(value: number | null, digits = 3): string {
  return value === null ? "-" : value.toFixed(digits);
}

export class ConsoleView {
  private client!: ConsoleClient;

  attach(client: ConsoleClient): void {
    this.client = client;
    el<HTMLInputElement>("manual-prompt").addEventListener("change", (ev) => {
      client.sendCommand("set_manual_prompt", { text: (ev.target as HTMLInputElement).value });
    });
    el<HTMLSelectElement>("scene-select").addEventListener("change", (ev) => {
      client.sendCommand("select_scene", { index: Number((ev.target as HTMLSelectElement).value) });
    });
    el<HTMLInputElement>("auto-cycle").addEventListener("change", (ev) => {
      client.sendCommand("set_auto_cycle", { on: (ev.target as HTMLInputElement).checked });
    });
    el<HTMLButtonElement>("save-button").addEventListener("click", () => {
      client.sendCommand("save_artifact", {
        title: el<HTMLInputElement>("save-title").value,
        notes: el<HTMLInputElement>("save-notes").value,
      });
    });
  }

  render(model: UiStateModel, now: number): void {
    const stale = isStale(model, now);
    const badge = el<HTMLSpanElement>("status-badge");
    badge.textContent = stale ? `${model.connection} (stale)` : model.connection;
    badge.className = stale ? "badge stale" : "badge live";
    const enabled = controlsEnabled(model);
    document
      .querySelectorAll<HTMLInputElement>("input, select, button")
      .forEach((input) => (input.disabled = !enabled));

    el<HTMLDivElement>("errors").textContent = model.errors.slice(-3).join(" | ");
    const snapshot = model.snapshot;
    if (!snapshot) return;

    this.renderSignals(model);
    this.renderPrompts(model);
    el<HTMLSpanElement>("fps").textContent = fmt(snapshot.effective_fps, 1);
    el<HTMLSpanElement>("latency").textContent = fmt(snapshot.backend.last_latency_ms, 1);
    el<HTMLSpanElement>("frame-index").textContent = String(snapshot.frame_index);
    el<HTMLSpanElement>("seed-policy").textContent = snapshot.seed_policy.mode;
  }

  private renderSignals(model: UiStateModel): void {
    const view = renderSignalPanel(model.snapshot!);
    const meters = el<HTMLDivElement>("meters");
    view.meters.forEach((meter, index) => {
      let row = meters.children[index] as HTMLDivElement | undefined;
      if (!row) {
        row = document.createElement("div");
        row.className = "meter";
        row.innerHTML =
          '<span class="meter-label"></span><div class="bar"><div class="fill"></div></div><span class="meter-value"></span>';
        meters.appendChild(row);
      }
      row.querySelector<HTMLSpanElement>(".meter-label")!.textContent = meter.label;
      const fraction = (meter.value - meter.min) / (meter.max - meter.min);
      row.querySelector<HTMLDivElement>(".fill")!.style.width = `${(fraction * 100).toFixed(1)}%`;
      row.querySelector<HTMLSpanElement>(".meter-value")!.textContent = meter.value.toFixed(3);
    });

    const controls = el<HTMLDivElement>("controls");
    view.controls.forEach((control, index) => {
      let row = controls.children[index] as HTMLLabelElement | undefined;
      if (!row) {
        row = document.createElement("label");
        row.className = "control";
        row.innerHTML = '<span class="control-label"></span><input type="number">';
        const input = row.querySelector("input")!;
        input.addEventListener("change", () => {
          this.client.sendCommand("set_parameter", {
            name: row!.dataset.parameter,
            value: Number(input.value),
          });
        });
        controls.appendChild(row);
      }
      row.dataset.parameter = control.parameter;
      row.querySelector<HTMLSpanElement>(".control-label")!.textContent = control.label;
      const input = row.querySelector("input")!;
      input.min = String(control.min);
      input.max = String(control.max);
      input.step = String(control.step);
      if (document.activeElement !== input) {
        input.value = control.value === null ? "" : String(control.value);
      }
    });
  }

  private renderPrompts(model: UiStateModel): void {
    const view = renderPromptPanel(model.snapshot!);
    el<HTMLDivElement>("positive-prompt").textContent = view.positive;
    el<HTMLDivElement>("negative-prompt").textContent = view.negative;

    const list = el<HTMLUListElement>("active-prompts");
    list.innerHTML = "";
    for (const row of view.activePrompts) {
      const item = document.createElement("li");
      item.textContent = `${row.text} · ${row.weight.toFixed(2)}`;
      list.appendChild(item);
    }

    const toggles = el<HTMLDivElement>("override-toggles");
    view.overrides.forEach((toggle, index) => {
      let row = toggles.children[index] as HTMLLabelElement | undefined;
      if (!row) {
        row = document.createElement("label");
        row.className = "toggle";
        row.innerHTML = '<input type="checkbox"><span></span>';
        const input = row.querySelector("input")!;
        input.addEventListener("change", () => {
          this.client.sendCommand("toggle_override", {
            name: row!.dataset.override,
            on: input.checked,
          });
        });
        toggles.appendChild(row);
      }
      row.dataset.override = toggle.name;
      row.querySelector("span")!.textContent = toggle.label;
      row.querySelector("input")!.checked = toggle.on;
    });

    const manual = el<HTMLInputElement>("manual-prompt");
    if (document.activeElement !== manual) manual.value = view.manualPrompt;

    const sceneBlock = el<HTMLDivElement>("scene-block");
    if (view.scene) {
      sceneBlock.hidden = false;
      const select = el<HTMLSelectElement>("scene-select");
      if (select.options.length !== view.scene.count) {
        select.innerHTML = "";
        for (let i = 0; i < view.scene.count; i += 1) {
          const option = document.createElement("option");
          option.value = String(i);
          option.textContent = `scene ${i}`;
          select.appendChild(option);
        }
      }
      select.value = String(view.scene.index);
      select.options[view.scene.index].textContent = `scene ${view.scene.index}: ${view.scene.name}`;
      el<HTMLSpanElement>("progression").textContent = view.scene.progression.toFixed(3);
      el<HTMLInputElement>("auto-cycle").checked = view.scene.autoCycle;
    } else {
      sceneBlock.hidden = true;
    }

    const fragmentsBlock = el<HTMLDivElement>("fragments-block");
    if (view.fragments) {
      fragmentsBlock.hidden = false;
      const rows = el<HTMLUListElement>("fragment-rows");
      rows.innerHTML = "";
      for (const fragment of view.fragments) {
        const item = document.createElement("li");
        item.textContent = `${fragment.label} (id ${fragment.id}) · weight ${fragment.weight.toFixed(2)}`;
        rows.appendChild(item);
      }
      el<HTMLSpanElement>("unknown-ids").textContent = view.unknownIds.length
        ? `unknown cards: ${view.unknownIds.join(", ")}`
        : "";
    } else {
      fragmentsBlock.hidden = true;
    }
    el<HTMLDivElement>("save-form").hidden = !view.showSaveForm;

    const image = el<HTMLImageElement>("preview");
    if (view.imageDigest) {
      const src = `/image/${view.imageDigest}.png`;
      if (image.dataset.digest !== view.imageDigest) {
        image.dataset.digest = view.imageDigest;
        image.src = src;
      }
    }
  }
}
