import { ReviewApi } from "./api.js";
import { ConsoleApp } from "./app.js";
import { mount } from "./dom.js";

const api = new ReviewApi("");
const app = new ConsoleApp(api);
mount(app);
void app.init();
