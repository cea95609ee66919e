import { ReviewApp } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const reviewer = params.get("reviewer") ?? "anonymous";
const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
void new ReviewApp(root, reviewer).start();
