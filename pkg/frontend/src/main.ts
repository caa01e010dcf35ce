import { startApp } from './app';

startApp(document, document.body);
