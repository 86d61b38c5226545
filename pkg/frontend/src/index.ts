import { Backend, createApp } from './server';

function parseArgs(argv: string[]): { port: number; backend: Backend } {
  let port = 8500;
  let backend: Backend = 'nearest';
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === '--port') {
      port = parseInt(argv[++i], 10);
    } else if (argv[i] === '--backend') {
      const value = argv[++i];
      if (value !== 'nearest' && value !== 'passthrough') {
        console.error(`unknown backend: ${value}`);
        process.exit(2);
      }
      backend = value;
    } else {
      console.error(`unknown argument: ${argv[i]}`);
      process.exit(2);
    }
  }
  return { port, backend };
}

const { port, backend } = parseArgs(process.argv.slice(2));
const app = createApp(backend, (line) => console.log(JSON.stringify(line)));
app.listen(port, () => {
  console.log(JSON.stringify({ event: 'listening', port, backend }));
});
