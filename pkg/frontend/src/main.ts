import { boot } from "./app.js";

window.addEventListener("DOMContentLoaded", boot);
