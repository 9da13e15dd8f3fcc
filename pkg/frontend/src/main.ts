import { ConsoleClient } from "./net.js";
import { ConsoleView } from "./dom.js";

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const view = new ConsoleView();
const client = new ConsoleClient(
  wsUrl,
  (url) => new WebSocket(url),
  (model) => view.render(model, Date.now()),
);
view.attach(client);
client.connect();

// staleness must surface even when no messages arrive
setInterval(() => view.render(client.getModel(), Date.now()), 500);
