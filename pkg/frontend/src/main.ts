/* Browser entry point; the test suite imports app.ts directly instead. */

import { createApp } from "./app.js";

const root = document.getElementById("app");
if (root instanceof HTMLElement) {
  createApp(root);
}
