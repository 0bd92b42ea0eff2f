// Bundle entry point: boot against the same origin that served /ui.

import { boot } from "./main";

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", () => void boot());
} else {
  void boot();
}
