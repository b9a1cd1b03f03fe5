/** Table glyph: a rotated rectangle between the two goal markers.
 *
 * Positive orientations are counterclockwise, so the CSS angle is negated.
 * The -90 marker is the higher-reward goal; the +90 marker matches the
 * partner's habitual direction.
 */

export function renderTable(el: HTMLElement, orientation: number): void {
  el.replaceChildren();
  const left = document.createElement("div");
  left.className = "goal-marker";
  left.id = "goal-clockwise";
  left.textContent = "Goal 1 (-90°)";
  const right = document.createElement("div");
  right.className = "goal-marker";
  right.id = "goal-counterclockwise";
  right.textContent = "Goal 2 (+90°)";
  const glyph = document.createElement("div");
  glyph.id = "table-glyph";
  glyph.style.transform = `rotate(${-orientation}deg)`;
  glyph.dataset.orientation = String(orientation);
  el.appendChild(left);
  el.appendChild(glyph);
  el.appendChild(right);
}
