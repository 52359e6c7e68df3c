import { ServiceClient } from "./api.js";
import { mountWorkbench } from "./app.js";

const base = new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8000";
const root = document.getElementById("workbench");
if (!root) throw new Error("missing #workbench container");
mountWorkbench(root, new ServiceClient(base));
