/** Belief panel: two bar groups showing the robot's current marginals over
 * the partner's adaptability and compliance.
 *
 * Every bar carries the service-reported probability verbatim in
 * ``data-value``; bar heights are presentation only. The panel never
 * recomputes or renormalizes anything.
 */

import type { BeliefSnapshot } from "./api.js";

function barGroup(title: string, grid: number[], values: number[]): HTMLElement {
  const group = document.createElement("div");
  group.className = "belief-group";
  const heading = document.createElement("h3");
  heading.textContent = title;
  group.appendChild(heading);
  const bars = document.createElement("div");
  bars.className = "belief-bars";
  values.forEach((value, i) => {
    const slot = document.createElement("div");
    slot.className = "belief-slot";
    const bar = document.createElement("div");
    bar.className = "belief-bar";
    bar.style.height = `${Math.max(0, Math.min(1, value)) * 100}%`;
    bar.dataset.value = String(value);
    bar.title = `${grid[i]}: ${value}`;
    const label = document.createElement("span");
    label.className = "belief-label";
    label.textContent = String(grid[i] ?? i);
    slot.appendChild(bar);
    slot.appendChild(label);
    bars.appendChild(slot);
  });
  group.appendChild(bars);
  return group;
}

export function renderBeliefPanel(
  el: HTMLElement,
  belief: BeliefSnapshot,
  grids: { alpha: number[]; compliance: number[] },
): void {
  el.replaceChildren(
    barGroup("Adaptability estimate", grids.alpha, belief.alpha_marginal),
    barGroup("Compliance estimate", grids.compliance, belief.compliance_marginal),
  );
}

/** Read back the exact numbers the panel displays, in render order. */
export function panelValues(el: HTMLElement): { alpha: number[]; compliance: number[] } {
  const groups = el.querySelectorAll(".belief-group");
  const read = (group: Element | undefined): number[] =>
    group
      ? Array.from(group.querySelectorAll<HTMLElement>(".belief-bar")).map((bar) =>
          Number(bar.dataset.value),
        )
      : [];
  return { alpha: read(groups[0]), compliance: read(groups[1]) };
}
