/** Light/dark theme with persistence; toggling only touches the documentElement
 * attribute and storage, never conversation state. */

import type { Theme } from "./types.js";

const THEME_KEY = "svw.theme.v1";

type StorageLike = Pick<Storage, "getItem" | "setItem">;

export function loadTheme(storage: StorageLike): Theme {
  const stored = storage.getItem(THEME_KEY);
  return stored === "dark" ? "dark" : "light";
}

export function saveTheme(storage: StorageLike, theme: Theme): void {
  storage.setItem(THEME_KEY, theme);
}

export function applyTheme(root: { setAttribute(n: string, v: string): void }, theme: Theme): void {
  root.setAttribute("data-theme", theme);
}

export function toggleTheme(storage: StorageLike,
                            root: { setAttribute(n: string, v: string): void }): Theme {
  const next: Theme = loadTheme(storage) === "dark" ? "light" : "dark";
  saveTheme(storage, next);
  applyTheme(root, next);
  return next;
}
