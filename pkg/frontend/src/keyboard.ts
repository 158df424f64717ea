// Keyboard layer: digits 1-5 score the focused criterion and move focus to
// the next one, arrows move focus, Enter submits. The interpreter is pure;
// binding happens in main.ts.

export type KeyAction =
  | { type: "set-score"; value: number }
  | { type: "focus-next" }
  | { type: "focus-prev" }
  | { type: "submit" };

export function interpretKey(key: string): KeyAction | null {
  if (key >= "1" && key <= "5") {
    return { type: "set-score", value: Number(key) };
  }
  switch (key) {
    case "ArrowDown":
    case "j":
      return { type: "focus-next" };
    case "ArrowUp":
    case "k":
      return { type: "focus-prev" };
    case "Enter":
      return { type: "submit" };
    default:
      return null;
  }
}

export function bindKeyboard(
  target: { addEventListener(type: "keydown", cb: (ev: KeyboardEvent) => void): void },
  handle: (action: KeyAction) => void,
): void {
  target.addEventListener("keydown", (event) => {
    if (event.ctrlKey || event.altKey || event.metaKey) return;
    const tag = (event.target as HTMLElement | null)?.tagName;
    if (tag === "INPUT" || tag === "TEXTAREA") return;
    const action = interpretKey(event.key);
    if (action) {
      event.preventDefault();
      handle(action);
    }
  });
}
